#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::{Child, Command, Output, Stdio};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

pub fn rgf() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rgf"));
    cmd.env_remove("RGF_GATEWAY_URL");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    rgf().args(args).output().unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A `serve-mock` child on an ephemeral port; killed on drop.
pub struct MockServer {
    child: Child,
    pub url: String,
}

impl MockServer {
    pub fn start() -> Self {
        let mut child = rgf()
            .args(["serve-mock", "--port", "0", "--gazetteer"])
            .arg(fixture("toy_gazetteer.jsonl"))
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        MockServer { child, url }
    }

    pub fn addr(&self) -> &str {
        self.url.trim_start_matches("http://")
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
