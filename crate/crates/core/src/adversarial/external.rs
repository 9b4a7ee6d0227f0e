//! Discriminator served by another process, spoken to in newline-delimited
//! JSON over a child process's stdio or a TCP socket.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Assessment, Discriminator};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct Request<'a> {
    query: &'a str,
    candidate_source: &'a str,
    neighbors: &'a [&'a str],
}

#[derive(Deserialize)]
struct Response {
    score: f64,
}

enum Channel {
    Child {
        child: Child,
        stdin: ChildStdin,
        lines: Receiver<String>,
    },
    Tcp {
        writer: TcpStream,
        reader: BufReader<TcpStream>,
    },
}

pub struct ExternalDiscriminator {
    endpoint: String,
    timeout: Duration,
    channel: Mutex<Channel>,
}

impl ExternalDiscriminator {
    /// `endpoint` is either `tcp://host:port` or a shell command whose stdin
    /// receives one request per line and whose stdout answers each.
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self> {
        let channel = match endpoint.strip_prefix("tcp://") {
            Some(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| Error::External(format!("cannot connect to {addr}: {e}")))?;
                stream
                    .set_read_timeout(Some(timeout))
                    .map_err(|e| Error::External(e.to_string()))?;
                let reader = BufReader::new(stream.try_clone().map_err(|e| Error::External(e.to_string()))?);
                Channel::Tcp { writer: stream, reader }
            }
            None => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(endpoint)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::External(format!("cannot start {endpoint:?}: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let (tx, lines) = mpsc::channel();
                thread::spawn(move || {
                    for line in BufReader::new(stdout).lines() {
                        let Ok(line) = line else { break };
                        if tx.send(line).is_err() {
                            break;
                        }
                    }
                });
                Channel::Child { child, stdin, lines }
            }
        };
        Ok(ExternalDiscriminator {
            endpoint: endpoint.to_string(),
            timeout,
            channel: Mutex::new(channel),
        })
    }

    fn exchange(&self, request: &str) -> std::result::Result<f64, String> {
        let mut channel = self.channel.lock().map_err(|_| "channel poisoned".to_string())?;
        let line = match &mut *channel {
            Channel::Child { stdin, lines, .. } => {
                // Drop answers to earlier requests that arrived after their timeout.
                while lines.try_recv().is_ok() {}
                writeln!(stdin, "{request}").and_then(|_| stdin.flush()).map_err(|e| e.to_string())?;
                lines.recv_timeout(self.timeout).map_err(|e| match e {
                    mpsc::RecvTimeoutError::Timeout => format!("no answer within {:?}", self.timeout),
                    mpsc::RecvTimeoutError::Disconnected => "process closed its output".to_string(),
                })?
            }
            Channel::Tcp { writer, reader } => {
                writeln!(writer, "{request}").and_then(|_| writer.flush()).map_err(|e| e.to_string())?;
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => return Err("connection closed".into()),
                    Ok(_) => line,
                    Err(e) => return Err(e.to_string()),
                }
            }
        };
        let resp: Response = serde_json::from_str(line.trim()).map_err(|e| format!("bad response {line:?}: {e}"))?;
        if !(0.0..=1.0).contains(&resp.score) {
            return Err(format!("score {} outside [0, 1]", resp.score));
        }
        Ok(resp.score)
    }
}

impl Discriminator for ExternalDiscriminator {
    fn assess(&self, a: &Assessment<'_>) -> f64 {
        let request = serde_json::to_string(&Request {
            query: a.query,
            candidate_source: a.candidate_source,
            neighbors: a.neighbor_sources,
        })
        .expect("strings serialize");
        match self.exchange(&request) {
            Ok(s) => s,
            Err(why) => {
                eprintln!(
                    "warning: external discriminator {} failed on {}: {why}; scoring 0.0",
                    self.endpoint, a.candidate_id
                );
                0.0
            }
        }
    }
}

impl Drop for ExternalDiscriminator {
    fn drop(&mut self) {
        if let Ok(Channel::Child { child, .. }) = self.channel.get_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
