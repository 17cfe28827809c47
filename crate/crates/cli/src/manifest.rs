//! Run manifest: command, seed, timings, the resolved configuration,
//! result blocks and a SHA-256 digest of every output file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};
use talbot_core::grid_field::io::write_atomic;

use crate::error::{AtPath, CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.txt";

pub struct Manifest {
    command: String,
    seed: u64,
    threads: usize,
    clock: Instant,
    timings: Vec<(String, f64)>,
    config: Option<String>,
    blocks: Vec<(String, Vec<(String, String)>)>,
    outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, threads: usize) -> Self {
        Self {
            command: command.to_string(),
            seed,
            threads,
            clock: Instant::now(),
            timings: Vec::new(),
            config: None,
            blocks: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records the time since the previous mark under `stage`.
    pub fn mark(&mut self, stage: &str) {
        let t = self.clock.elapsed().as_secs_f64();
        self.clock = Instant::now();
        self.timings.push((stage.to_string(), t));
    }

    pub fn set_config(&mut self, echo: String) {
        self.config = Some(echo);
    }

    pub fn block(&mut self, name: impl Into<String>, entries: Vec<(String, String)>) {
        self.blocks.push((name.into(), entries));
    }

    /// Registers a file (relative to the output directory) for hashing.
    pub fn output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    /// Hashes the outputs as written on disk and writes `manifest.txt`.
    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "threads = {}\n", self.threads);
        let _ = writeln!(s, "[timing]");
        for (k, t) in &self.timings {
            let _ = writeln!(s, "{k}_s = {t:.6}");
        }
        s.push('\n');
        if let Some(c) = &self.config {
            s.push_str(c);
        }
        for (name, entries) in &self.blocks {
            let _ = writeln!(s, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(s, "{k} = {v}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "[outputs]");
        for name in &self.outputs {
            let _ = writeln!(s, "{name} = sha256:{}", digest_file(&dir.join(name))?);
        }
        let path = dir.join(MANIFEST_NAME);
        write_atomic(&path, s.as_bytes()).at_path(&path)?;
        Ok(path)
    }
}

pub fn digest_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
