//! Writes the built-in fixtures as feeder files:
//! `cargo run -p restora --example export_fixtures -- <dir>`.

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    for name in restora_core::fixtures::NAMES {
        let (f, sc) = restora_core::fixtures::by_name(name).expect("listed fixture");
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, restora::to_json_string(&f, Some(&sc)) + "\n")?;
        println!("{}", path.display());
    }
    Ok(())
}
