//! File/stdin/stdout plumbing. `-` means the standard stream everywhere.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use nsim_core::noise::{parse_detour_trace, parse_trace};
use nsim_core::{DetourTrace, SampleTrace, Unit};
use sha2::{Digest, Sha256};

use crate::failure::{CliResult, Failure};

pub fn read_bytes(path: &str) -> CliResult<Vec<u8>> {
    if path == "-" {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf)?;
        return Ok(buf);
    }
    fs::read(path).map_err(|e| Failure::from(e).context(path))
}

pub fn read_text(path: &str) -> CliResult<String> {
    String::from_utf8(read_bytes(path)?).map_err(|_| Failure::validation(format!("{path}: not UTF-8 text")))
}

pub fn write_output(path: Option<&str>, text: &str) -> CliResult {
    match path {
        None | Some("-") => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
        Some(p) => fs::write(p, text).map_err(|e| Failure::from(e).context(p))?,
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load_trace(path: &str, unit: Unit) -> CliResult<(SampleTrace, String)> {
    let bytes = read_bytes(path)?;
    let trace = parse_trace(bytes.as_slice(), Path::new(path), unit)?;
    Ok((trace, sha256_hex(&bytes)))
}

pub fn load_detours(path: &str) -> CliResult<(DetourTrace, String)> {
    let text = read_text(path)?;
    let trace = parse_detour_trace(&text, Path::new(path))?;
    Ok((trace, sha256_hex(text.as_bytes())))
}

pub fn trace_csv(trace: &SampleTrace) -> CliResult<String> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("trace CSV is ASCII"))
}
