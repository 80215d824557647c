//! Command-line entry points (placeholder during bring-up).

pub fn run() -> i32 {
    0
}
