use restora_core::ncadmm::Executor;

/// Runs agent solves on up to `threads` scoped worker threads. Items are
/// split into contiguous chunks, so each item is touched by one thread.
#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    threads: usize,
}

impl Threaded {
    pub fn new(threads: usize) -> Threaded {
        Threaded { threads: threads.max(1) }
    }

    /// One worker per available core.
    pub fn available() -> Threaded {
        Threaded::new(available_threads())
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

pub fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Executor for Threaded {
    fn for_each_mut<T: Send, F: Fn(&mut T) + Sync>(&self, items: &mut [T], f: F) {
        let workers = self.threads.min(items.len());
        if workers <= 1 {
            items.iter_mut().for_each(f);
            return;
        }
        let chunk = items.len().div_ceil(workers);
        let f = &f;
        std::thread::scope(|s| {
            for part in items.chunks_mut(chunk) {
                s.spawn(move || part.iter_mut().for_each(f));
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_item_visited_once() {
        for threads in [1, 2, 3, 8, 64] {
            let mut v: Vec<u64> = (0..37).collect();
            Threaded::new(threads).for_each_mut(&mut v, |x| *x = *x * 2 + 1);
            assert_eq!(v, (0..37).map(|x| x * 2 + 1).collect::<Vec<_>>());
        }
        let mut empty: Vec<u8> = Vec::new();
        Threaded::new(4).for_each_mut(&mut empty, |_| unreachable!());
        assert_eq!(Threaded::new(0).threads(), 1);
    }
}
