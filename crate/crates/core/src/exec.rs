//! Subprocess execution with a wall-clock timeout, bounded output capture
//! and optional address-space cap.
//!
//! Every child runs in its own process group so a timeout kills the whole
//! tree (compiler drivers fork `cc1`, which would otherwise keep the pipes
//! open).

use std::env;
use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

#[derive(Debug, Clone)]
pub struct Limits {
    pub timeout: Duration,
    pub max_output_bytes: usize,
    /// RLIMIT_AS applied in the child, in bytes.
    pub memory_limit_bytes: Option<u64>,
    /// Best effort: move the child into a fresh network namespace.
    /// Silently skipped without CAP_SYS_ADMIN.
    pub isolate_network: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            max_output_bytes: 1 << 20,
            memory_limit_bytes: None,
            isolate_network: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProcessOutput {
    pub exit_code: Option<i32>,
    pub signal: Option<i32>,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub stdout_truncated: bool,
    pub timed_out: bool,
    pub elapsed: Duration,
}

impl ProcessOutput {
    pub fn success(&self) -> bool {
        !self.timed_out && self.exit_code == Some(0)
    }

    pub fn stdout_lossy(&self) -> String {
        String::from_utf8_lossy(&self.stdout).into_owned()
    }

    pub fn stderr_lossy(&self) -> String {
        String::from_utf8_lossy(&self.stderr).into_owned()
    }
}

fn drain<R: Read + Send + 'static>(mut reader: R, cap: usize) -> thread::JoinHandle<(Vec<u8>, bool)> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match reader.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    if n > room {
                        truncated = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        (kept, truncated)
    })
}

/// Runs `cmd` to completion or until `limits.timeout` elapses.
///
/// Stdin is closed. Stdout is kept up to `max_output_bytes` (the rest is
/// drained and discarded); stderr gets the same cap.
pub fn run(mut cmd: Command, limits: &Limits) -> io::Result<ProcessOutput> {
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let mem = limits.memory_limit_bytes;
    let isolate = limits.isolate_network;
    // SAFETY: only async-signal-safe libc calls between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(io::Error::last_os_error());
            }
            if isolate {
                libc::unshare(libc::CLONE_NEWNET);
            }
            if let Some(bytes) = mem {
                let lim = libc::rlimit {
                    rlim_cur: bytes as libc::rlim_t,
                    rlim_max: bytes as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
            }
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let out = drain(child.stdout.take().expect("piped stdout"), limits.max_output_bytes);
    let err = drain(child.stderr.take().expect("piped stderr"), limits.max_output_bytes);

    let (status, timed_out) = match child.wait_timeout(limits.timeout)? {
        Some(status) => (status, false),
        None => {
            // SAFETY: negative pid targets the process group created in pre_exec.
            unsafe {
                libc::kill(-(child.id() as i32), libc::SIGKILL);
            }
            (child.wait()?, true)
        }
    };
    let elapsed = start.elapsed();
    let (stdout, stdout_truncated) = out.join().unwrap_or_default();
    let (stderr, _) = err.join().unwrap_or_default();

    Ok(ProcessOutput {
        exit_code: status.code(),
        signal: status.signal(),
        stdout,
        stderr,
        stdout_truncated,
        timed_out,
        elapsed,
    })
}

/// Resolves a program name against `PATH` (names containing `/` are
/// checked as paths).
pub fn find_executable(program: &str) -> Option<PathBuf> {
    let is_exec = |p: &Path| {
        use std::os::unix::fs::PermissionsExt;
        p.metadata()
            .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
            .unwrap_or(false)
    };
    if program.contains('/') {
        let p = PathBuf::from(program);
        return is_exec(&p).then_some(p);
    }
    let path = env::var_os("PATH")?;
    env::split_paths(&path)
        .map(|dir| dir.join(program))
        .find(|p| is_exec(p))
}

/// First line of `<program> --version`, or `"unknown"`.
pub fn tool_version(program: &str) -> String {
    Command::new(program)
        .arg("--version")
        .output()
        .ok()
        .and_then(|o| String::from_utf8_lossy(&o.stdout).lines().next().map(str::to_owned))
        .unwrap_or_else(|| "unknown".to_owned())
}
