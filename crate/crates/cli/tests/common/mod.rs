#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

pub const BIN: &str = env!("CARGO_BIN_EXE_coterm");

pub fn coterm(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("COTERM_SCHEDULER_URL")
        .output()
        .expect("coterm runs")
}

pub struct Server {
    pub child: Child,
    pub url: String,
}

impl Server {
    /// Starts `coterm serve` on an ephemeral port and waits for its banner.
    pub fn start(store: &Path, extra: &[&str]) -> Server {
        Self::start_on("127.0.0.1:0", store, extra)
    }

    pub fn start_on(listen: &str, store: &Path, extra: &[&str]) -> Server {
        let mut child = Command::new(BIN)
            .args(["serve", "--listen", listen, "--store"])
            .arg(store)
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("serve starts");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .expect("banner");
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Server { child, url }
    }

    pub fn terminate(&mut self) -> Option<i32> {
        Command::new("kill")
            .args(["-TERM", &self.child.id().to_string()])
            .status()
            .unwrap();
        let deadline = Instant::now() + Duration::from_secs(10);
        while Instant::now() < deadline {
            if let Some(status) = self.child.try_wait().unwrap() {
                return status.code();
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        self.child.kill().ok();
        None
    }

    pub fn kill(&mut self) {
        self.child.kill().ok();
        self.child.wait().ok();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.kill();
    }
}

pub fn write_job(dir: &Path, name: &str, extra: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(
        &path,
        format!("resource_path = corpus.tsv\npair_list_path = pairs.tsv\noutput_path = {name}.out.tsv\n{extra}"),
    )
    .unwrap();
    path
}
