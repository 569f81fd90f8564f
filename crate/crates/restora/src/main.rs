fn main() {
    restora::cli::init_logging();
    std::process::exit(restora::cli::run(std::env::args_os()));
}
