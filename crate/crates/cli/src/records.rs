use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use ssar_core::io::append_jsonl;

use crate::exit::{invalid, Failure};

/// First line of every command: the effective configuration, enough to rerun it
/// (pass the `config` object back through `--config`).
pub fn print_config_line<T: Serialize>(command: &str, cfg: &T, seed: u64) -> Result<(), Failure> {
    let line = json!({ "command": command, "config": cfg, "seed": seed });
    print_line(&line.to_string())
}

fn print_line(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| Failure::Io(format!("writing to stdout: {e}")))
}

/// Prints one record and appends it to `out` when given.
pub fn emit<T: Serialize>(record: &T, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string(record).map_err(|e| Failure::Runtime(e.to_string()))?;
    print_line(&text)?;
    if let Some(path) = out {
        append_jsonl(path, record)?;
    }
    Ok(())
}

/// Runs `f` on a pool of `jobs` worker threads.
pub fn with_pool<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R, Failure> {
    if jobs == 0 {
        return Err(invalid("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(pool.install(f))
}
