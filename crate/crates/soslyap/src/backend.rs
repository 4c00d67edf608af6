//! Backend selection and the problem recorder.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use soslyap_core::loi::{Backend, BackendResult, BackendStatus, FeasibilityProblem, InteriorPoint};

use crate::CliError;

/// Environment variable naming the backend: `ipm` (default) or `recorder`.
pub const BACKEND_ENV: &str = "SOSLYAP_BACKEND";

/// Writes each problem to `problem-NNNN.txt` in the sparse text format and
/// reports a backend failure.
#[derive(Debug)]
pub struct Recorder {
    dir: PathBuf,
    count: AtomicUsize,
}

impl Recorder {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Recorder {
            dir: dir.into(),
            count: AtomicUsize::new(0),
        }
    }

    pub fn recorded(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }
}

impl Backend for Recorder {
    fn name(&self) -> &str {
        "recorder"
    }

    fn solve(&self, problem: &FeasibilityProblem) -> BackendResult {
        let k = self.count.fetch_add(1, Ordering::SeqCst);
        let path = self.dir.join(format!("problem-{k:04}.txt"));
        let written = fs::create_dir_all(&self.dir).and_then(|_| fs::write(&path, problem.to_sparse_text()));
        BackendResult {
            status: BackendStatus::Failure(if written.is_ok() {
                "recorded for offline solving"
            } else {
                "recorder could not write problem"
            }),
            blocks: Vec::new(),
            iterations: 0,
        }
    }
}

pub type SharedBackend = Box<dyn Backend + Sync + Send>;

/// Backend named by `value`; problems recorded under `out/problems`.
pub fn select_backend(value: Option<&str>, out: &Path) -> Result<SharedBackend, CliError> {
    match value.unwrap_or("ipm") {
        "ipm" | "" => Ok(Box::new(InteriorPoint::default())),
        "recorder" => Ok(Box::new(Recorder::new(out.join("problems")))),
        other => Err(CliError::Config(format!("unknown backend {other:?} in {BACKEND_ENV}"))),
    }
}
