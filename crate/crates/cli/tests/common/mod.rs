/*
Copyright 2026 The cdfplan Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#![allow(dead_code)]

use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use cdfplan::config::ScenarioFile;
use cdfplan::wire::{decode, encode, StateMsg, WireMessage};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

pub const BIN: &str = env!("CARGO_BIN_EXE_cdfplan");

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn cdfplan(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

pub fn path_arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Field for the stock 2-link arm, built once per test process.
pub fn field_file() -> &'static Path {
    static FIELD: OnceLock<PathBuf> = OnceLock::new();
    FIELD.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR"));
        let tmp = dir.join(format!("field-{}.bin", std::process::id()));
        let o = cdfplan(&["build-cdf", "--scenario", path_arg(&repo_root().join("scenarios/empty.toml")), "--out", path_arg(&tmp)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let out = dir.join("field.bin");
        std::fs::rename(&tmp, &out).unwrap();
        out
    })
}

/// Copy of a stock scenario that loads the shared field, written into `dir`.
pub fn scenario(dir: &Path, stock: &str, edit: impl FnOnce(&mut ScenarioFile)) -> PathBuf {
    let mut file = ScenarioFile::load(&repo_root().join("scenarios").join(format!("{stock}.toml"))).unwrap();
    file.cdf.path = Some(field_file().to_path_buf());
    edit(&mut file);
    let out = dir.join(format!("{}.toml", stock.replace('/', "_")));
    std::fs::write(&out, file.to_toml().unwrap()).unwrap();
    out
}

pub fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// Kills the child on drop so failing tests do not leak servers.
pub struct Server(pub Child);

impl Server {
    pub fn spawn(args: &[&str]) -> Self {
        Server(Command::new(BIN).args(args).stdout(Stdio::null()).stderr(Stdio::piped()).spawn().unwrap())
    }

    pub fn wait(mut self, limit: Duration) -> Option<i32> {
        let deadline = Instant::now() + limit;
        while Instant::now() < deadline {
            if let Some(s) = self.0.try_wait().unwrap() {
                return s.code();
            }
            thread::sleep(Duration::from_millis(20));
        }
        None
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

pub struct Client {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
}

impl Client {
    /// Retries until the server listens.
    pub fn connect(port: u16) -> Self {
        let deadline = Instant::now() + Duration::from_secs(60);
        loop {
            match tungstenite::connect(format!("ws://127.0.0.1:{port}")) {
                Ok((ws, _)) => return Client { ws },
                Err(e) if Instant::now() > deadline => panic!("could not connect: {e}"),
                Err(_) => thread::sleep(Duration::from_millis(50)),
            }
        }
    }

    pub fn send(&mut self, msg: &WireMessage) {
        self.ws.send(Message::text(encode(msg).unwrap())).unwrap();
    }

    pub fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::text(text.to_string())).unwrap();
    }

    /// Next text message, or `None` once the server closes.
    pub fn next(&mut self) -> Option<WireMessage> {
        loop {
            match self.ws.read() {
                Ok(Message::Text(t)) => return Some(decode(&t).expect("server messages decode")),
                Ok(Message::Close(_)) => {
                    let _ = self.ws.flush();
                    continue;
                }
                Ok(_) => continue,
                Err(_) => return None,
            }
        }
    }

    pub fn next_state(&mut self) -> StateMsg {
        loop {
            match self.next().expect("server still open") {
                WireMessage::State(s) => return s,
                _ => continue,
            }
        }
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        while self.ws.read().is_ok() {}
    }
}
