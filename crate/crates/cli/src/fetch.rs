//! Download and verify dataset files.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use md5::{Digest, Md5};

use crate::error::CliError;

pub const DEFAULT_MNIST_MIRROR: &str = "https://ossci-datasets.s3.amazonaws.com/mnist";

/// Upper bound on a single download.
const MAX_BYTES: u64 = 64 << 20;

/// (file name, md5 hex digest)
pub const MNIST_FILES: [(&str, &str); 4] = [
    ("train-images-idx3-ubyte.gz", "f68b3c2dcbeaaa9fbdd348bbdeb94873"),
    ("train-labels-idx1-ubyte.gz", "d53e105ee54ea40749a09fcbcd1e9432"),
    ("t10k-images-idx3-ubyte.gz", "9fb629c4189551a2d022fa330f9573f3"),
    ("t10k-labels-idx1-ubyte.gz", "ec29112dd5afa0611ce80d1b7f02629c"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FetchStatus {
    /// Already present with the right digest.
    Present,
    Downloaded,
    /// Present but corrupt; downloaded again.
    Replaced,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchOutcome {
    pub path: PathBuf,
    pub status: FetchStatus,
}

pub fn md5_hex(bytes: &[u8]) -> String {
    Md5::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn download(url: &str) -> Result<Vec<u8>, CliError> {
    let failure = |detail: String| CliError::NetworkFailure {
        url: url.to_string(),
        detail,
    };
    let mut response = ureq::get(url).call().map_err(|e| failure(e.to_string()))?;
    let mut bytes = Vec::new();
    response
        .body_mut()
        .as_reader()
        .take(MAX_BYTES)
        .read_to_end(&mut bytes)
        .map_err(|e| failure(e.to_string()))?;
    Ok(bytes)
}

/// Fetch `files` from `mirror` into `dest`, skipping files whose digest
/// already matches. A corrupt file is reported on stderr and replaced.
pub fn fetch_files(files: &[(&str, &str)], mirror: &str, dest: &Path) -> Result<Vec<FetchOutcome>, CliError> {
    fs::create_dir_all(dest).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dest.display())))?;
    let mut out = Vec::new();
    for &(name, digest) in files {
        let path = dest.join(name);
        let mut status = FetchStatus::Downloaded;
        if let Ok(existing) = fs::read(&path) {
            let actual = md5_hex(&existing);
            if actual == digest {
                out.push(FetchOutcome {
                    path,
                    status: FetchStatus::Present,
                });
                continue;
            }
            eprintln!("{name}: checksum mismatch (expected {digest}, got {actual}); downloading again");
            status = FetchStatus::Replaced;
        }
        let url = format!("{}/{name}", mirror.trim_end_matches('/'));
        let bytes = download(&url)?;
        let actual = md5_hex(&bytes);
        if actual != digest {
            return Err(CliError::ChecksumMismatch {
                file: url,
                expected: digest.to_string(),
                actual,
            });
        }
        let tmp = path.with_extension("part");
        fs::write(&tmp, &bytes)
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        out.push(FetchOutcome { path, status });
    }
    Ok(out)
}

pub fn cmd_fetch(dataset: &str, mirror: Option<&str>, dest: &Path) -> Result<Vec<FetchOutcome>, CliError> {
    match dataset {
        "mnist" => fetch_files(&MNIST_FILES, mirror.unwrap_or(DEFAULT_MNIST_MIRROR), dest),
        other => Err(CliError::Validation(format!("unknown dataset {other:?} (known: mnist)"))),
    }
}
