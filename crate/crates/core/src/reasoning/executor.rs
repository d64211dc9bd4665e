//! Sandboxed execution of generated programs.
//!
//! Each run gets a fresh temporary directory holding the program and the
//! table as `table.csv`. The child runs in its own process group with a
//! cleared environment, CPU and address-space limits, and, when the host
//! allows unprivileged user namespaces, an empty network namespace.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{render_csv, Table};

pub const TABLE_FILE: &str = "table.csv";
pub const TABLE_PATH_VAR: &str = "TM_TABLE_PATH";
pub const QUESTION_VAR: &str = "TM_QUESTION";

/// Extra time past the deadline allowed for killing and reaping the child.
pub const GRACE: Duration = Duration::from_secs(1);
const OUTPUT_CAP: u64 = 1 << 20;
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutorProfile {
    /// Interpreter command; the program path is appended.
    pub interpreter: Vec<String>,
    /// Extension of the program file, without the dot.
    pub extension: String,
    pub timeout_ms: u64,
    pub memory_limit_mb: u64,
    pub isolate_network: bool,
    /// Maximum number of programs running at once.
    pub parallelism: usize,
}

impl Default for ExecutorProfile {
    fn default() -> Self {
        Self {
            interpreter: vec!["python3".into()],
            extension: "py".into(),
            timeout_ms: 10_000,
            memory_limit_mb: 1024,
            isolate_network: true,
            parallelism: 4,
        }
    }
}

impl ExecutorProfile {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub stdout: String,
    pub stderr: String,
    /// Exit code, or -1 when the child was killed by a signal.
    pub exit_status: i32,
    #[serde(skip)]
    pub duration_ms: u64,
    pub timed_out: bool,
    pub network_isolated: bool,
}

impl ExecutionResult {
    /// Last non-empty stdout line.
    pub fn answer_line(&self) -> Option<&str> {
        self.stdout.lines().map(str::trim).rfind(|l| !l.is_empty())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("program exceeded the {}ms time limit", .0.duration_ms)]
    Timeout(ExecutionResult),
    #[error("program exited with status {}", .0.exit_status)]
    NonZeroExit(ExecutionResult),
    #[error("program printed nothing")]
    EmptyOutput(ExecutionResult),
    #[error("could not run program: {0}")]
    Spawn(String),
}

impl ExecError {
    pub fn result(&self) -> Option<&ExecutionResult> {
        match self {
            ExecError::Timeout(r) | ExecError::NonZeroExit(r) | ExecError::EmptyOutput(r) => Some(r),
            ExecError::Spawn(_) => None,
        }
    }
}

fn network_namespaces_available() -> bool {
    static PROBE: OnceLock<bool> = OnceLock::new();
    *PROBE.get_or_init(|| {
        Command::new("unshare")
            .args(["-rn", "true"])
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok_and(|s| s.success())
    })
}

/// Counting semaphore bounding concurrent children.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            free = self.cond.wait(free).expect("permit lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.cond.notify_one();
    }
}

/// Shares a profile and a concurrency limit across runs.
#[derive(Debug, Clone)]
pub struct Executor {
    profile: ExecutorProfile,
    permits: Arc<Permits>,
}

impl Executor {
    pub fn new(profile: ExecutorProfile) -> Self {
        let permits = Arc::new(Permits {
            free: Mutex::new(profile.parallelism.max(1)),
            cond: Condvar::new(),
        });
        Self { profile, permits }
    }

    pub fn profile(&self) -> &ExecutorProfile {
        &self.profile
    }

    pub fn run(&self, program: &str, table: &Table, question: &str) -> Result<ExecutionResult, ExecError> {
        let _permit = self.permits.acquire();
        execute_program(program, table, question, &self.profile)
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::new(ExecutorProfile::default())
    }
}

fn drain<R: Read + Send + 'static>(mut source: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = (&mut source).take(OUTPUT_CAP).read_to_end(&mut buf);
        let _ = std::io::copy(&mut source, &mut std::io::sink());
        buf
    })
}

fn kill_group(child: &Child) {
    // SAFETY: plain syscall on the process group created by setsid in pre_exec.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
}

pub fn execute_program(
    program: &str,
    table: &Table,
    question: &str,
    profile: &ExecutorProfile,
) -> Result<ExecutionResult, ExecError> {
    let spawn_err = |e: std::io::Error| ExecError::Spawn(e.to_string());
    if profile.interpreter.is_empty() {
        return Err(ExecError::Spawn("executor profile has no interpreter".into()));
    }
    let dir = tempfile::Builder::new()
        .prefix("tm-exec-")
        .tempdir()
        .map_err(spawn_err)?;
    let workdir = dir.path().to_path_buf();
    let program_path = workdir.join(format!("program.{}", profile.extension));
    let table_path = workdir.join(TABLE_FILE);
    std::fs::File::create(&program_path)
        .and_then(|mut f| f.write_all(program.as_bytes()))
        .map_err(spawn_err)?;
    std::fs::write(&table_path, render_csv(table)).map_err(spawn_err)?;

    let isolated = profile.isolate_network && network_namespaces_available();
    let mut argv: Vec<String> = Vec::new();
    if isolated {
        argv.extend(["unshare".to_string(), "-rn".to_string()]);
    }
    argv.extend(profile.interpreter.iter().cloned());
    argv.push(program_path.to_string_lossy().into_owned());

    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .current_dir(&workdir)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_else(|| "/usr/bin:/bin".into()))
        .env("HOME", &workdir)
        .env("LANG", "C.UTF-8")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONIOENCODING", "utf-8")
        .env(TABLE_PATH_VAR, &table_path)
        .env(QUESTION_VAR, question)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    let memory = profile.memory_limit_mb.saturating_mul(1 << 20) as libc::rlim_t;
    let cpu = profile.timeout().as_secs().saturating_add(1) as libc::rlim_t;
    // SAFETY: only async-signal-safe calls between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setsid() < 0 {
                return Err(std::io::Error::last_os_error());
            }
            let limits = [
                (libc::RLIMIT_AS, memory),
                (libc::RLIMIT_CPU, cpu),
                (libc::RLIMIT_FSIZE, 64 << 20),
            ];
            for (resource, value) in limits {
                let lim = libc::rlimit {
                    rlim_cur: value,
                    rlim_max: value,
                };
                if libc::setrlimit(resource, &lim) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
            }
            Ok(())
        });
    }

    let started = Instant::now();
    let mut child = cmd.spawn().map_err(spawn_err)?;
    let out = drain(child.stdout.take().expect("piped stdout"));
    let err = drain(child.stderr.take().expect("piped stderr"));
    let deadline = started + profile.timeout();
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if Instant::now() >= deadline => {
                timed_out = true;
                kill_group(&child);
                break child.wait().ok();
            }
            Ok(None) => thread::sleep(POLL),
            Err(_) => {
                kill_group(&child);
                break child.wait().ok();
            }
        }
    };
    // Reap anything the program left behind in its group.
    kill_group(&child);
    let duration = started.elapsed();

    let scrub = |bytes: Vec<u8>| {
        String::from_utf8_lossy(&bytes).replace(&*workdir.to_string_lossy(), "<workdir>")
    };
    let result = ExecutionResult {
        stdout: scrub(out.join().unwrap_or_default()),
        stderr: scrub(err.join().unwrap_or_default()),
        exit_status: status.and_then(|s| s.code()).unwrap_or(-1),
        duration_ms: duration.as_millis() as u64,
        timed_out,
        network_isolated: isolated,
    };
    if result.timed_out {
        Err(ExecError::Timeout(result))
    } else if result.exit_status != 0 {
        Err(ExecError::NonZeroExit(result))
    } else if result.answer_line().is_none() {
        Err(ExecError::EmptyOutput(result))
    } else {
        Ok(result)
    }
}
