use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::error::ModelError;

/// A deterministic scalar function of a `d`-vector.
pub trait Evaluator: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<f64, ModelError>;
}

/// Black-box model with call accounting.
///
/// Every call to [`BlackBox::evaluate`] increments the counter by one,
/// including calls that fail. Non-finite outputs are errors.
pub struct BlackBox {
    name: String,
    inner: Box<dyn Evaluator>,
    calls: AtomicU64,
    thread_safe: bool,
}

impl std::fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlackBox")
            .field("name", &self.name)
            .field("dim", &self.inner.dim())
            .field("calls", &self.calls())
            .field("thread_safe", &self.thread_safe)
            .finish()
    }
}

struct FnEvaluator<F> {
    dim: usize,
    f: F,
}

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok((self.f)(x))
    }
}

impl BlackBox {
    pub fn new(name: impl Into<String>, inner: Box<dyn Evaluator>, thread_safe: bool) -> Self {
        Self {
            name: name.into(),
            inner,
            calls: AtomicU64::new(0),
            thread_safe,
        }
    }

    /// Thread-safe black box backed by a pure function.
    pub fn from_fn<F>(name: impl Into<String>, dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(name, Box::new(FnEvaluator { dim, f }), true)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn is_thread_safe(&self) -> bool {
        self.thread_safe
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if x.len() != self.inner.dim() {
            return Err(ModelError::Dimension {
                expected: self.inner.dim(),
                got: x.len(),
            });
        }
        let y = self.inner.eval(x)?;
        if !y.is_finite() {
            return Err(ModelError::NonFinite {
                value: y,
                input: x.to_vec(),
            });
        }
        Ok(y)
    }
}

/// Command line of an external model process.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ProcessSpec {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl ProcessSpec {
    pub fn new(program: impl Into<String>, args: &[&str]) -> Self {
        Self {
            program: program.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

struct ProcessIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    line: String,
}

/// Model served by a child process over a line protocol: one request line of
/// `d` whitespace-separated floats, one response line holding one float.
struct ExternalProcess {
    dim: usize,
    io: Mutex<ProcessIo>,
}

impl Evaluator for ExternalProcess {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<f64, ModelError> {
        let mut io = self
            .io
            .lock()
            .map_err(|_| ModelError::Process("process handle poisoned".into()))?;
        let request = x
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(io.stdin, "{request}")
            .and_then(|_| io.stdin.flush())
            .map_err(|e| ModelError::Process(format!("write failed: {e}")))?;
        let ProcessIo { stdout, line, .. } = &mut *io;
        line.clear();
        let n = stdout
            .read_line(line)
            .map_err(|e| ModelError::Process(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(ModelError::Process(format!(
                "process closed its output after request {request:?}"
            )));
        }
        let text = line.trim();
        text.parse::<f64>().map_err(|_| ModelError::Protocol {
            line: text.to_string(),
        })
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

/// Spawns `spec` and wraps it as a single-threaded black box of dimension `dim`.
pub fn external_blackbox(spec: &ProcessSpec, dim: usize) -> Result<BlackBox, ModelError> {
    let mut child = Command::new(&spec.program)
        .args(&spec.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| ModelError::Process(format!("cannot launch {:?}: {e}", spec.program)))?;
    let stdin = child.stdin.take().expect("stdin is piped");
    let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
    let proc = ExternalProcess {
        dim,
        io: Mutex::new(ProcessIo {
            child,
            stdin,
            stdout,
            line: String::new(),
        }),
    };
    Ok(BlackBox::new(
        format!("external:{}", spec.program),
        Box::new(proc),
        false,
    ))
}
