//! Fixtures shared by the CLI, service and acceptance tests.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Output, Stdio};
use std::time::Duration;

use leafcnn::Tensor;
use leafcnn::checkpoint::{CheckpointMeta, to_bytes};
use leafcnn::data::{DatasetManifest, Label, Sample, Split, SplitRatios, tensor_to_rgb};
use leafcnn::layers::Layer;
use leafcnn::model::{Model, ModelConfig};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_leafcnn"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Network whose Diseased logit is `gain * (mean of input channel 0 - 0.5)`.
///
/// Every conv copies channel 0 through its (0, 0) tap; the hidden unit averages
/// the pooled map and the output layer compares it with 0.5.
pub fn brightness_model(gain: f32) -> Model<f32> {
    let mut m = Model::<f32>::new(ModelConfig::tomato_leaf(), 0).unwrap();
    let n = m.layers().len();
    for (i, layer) in m.layers_mut().iter_mut().enumerate() {
        match layer {
            Layer::Conv2d(c) => {
                c.weight.data_mut().fill(0.0);
                c.weight.set(&[0, 0, 0, 0], 1.0);
                c.bias.data_mut().fill(0.0);
            }
            Layer::Dense(d) if i == n - 2 => {
                d.weight.data_mut().fill(0.0);
                d.weight.set(&[0, 1], gain);
                d.bias.data_mut().fill(0.0);
                d.bias.data_mut()[1] = -0.5 * gain;
            }
            Layer::Dense(d) => {
                d.weight.data_mut().fill(0.0);
                d.bias.data_mut().fill(0.0);
                let cells = d.inputs() / 128;
                for k in (0..d.inputs()).step_by(128) {
                    d.weight.set(&[k, 0], 1.0 / cells as f32);
                }
            }
            _ => {}
        }
    }
    m
}

pub fn write_model(path: &Path, model: &Model<f32>) {
    let bytes = to_bytes(model, CheckpointMeta { epoch: 1, val_loss: 0.5, val_acc: 0.5 }).unwrap();
    std::fs::write(path, bytes).unwrap();
}

/// Solid image with channel 0 at `red` and the others at mid grey.
pub fn write_solid_png(path: &Path, size: usize, red: f32) {
    let t = Tensor::from_fn([size, size, 3], |i| if i % 3 == 0 { red } else { 0.5 });
    tensor_to_rgb(&t).unwrap().save(path).unwrap();
}

/// A test split whose images a [`brightness_model`] classifies into the given
/// confusion counts (positive class Diseased).
pub fn confusion_fixture(dir: &Path, tp: usize, fp: usize, tn: usize, fn_: usize) -> PathBuf {
    let mut samples = Vec::new();
    let groups = [
        (Label::Diseased, true, tp),
        (Label::Healthy, true, fp),
        (Label::Healthy, false, tn),
        (Label::Diseased, false, fn_),
    ];
    for (g, (label, bright, count)) in groups.into_iter().enumerate() {
        for i in 0..count {
            let path = dir.join(format!("g{g}_{i:03}.png"));
            write_solid_png(&path, 16, if bright { 0.9 } else { 0.1 });
            samples.push(Sample { path, label, boxes: Vec::new(), split: Split::Test });
        }
    }
    let manifest = DatasetManifest { samples, seed: 0, ratios: SplitRatios::default() };
    let path = dir.join("confusion.tsv");
    manifest.write(&path).unwrap();
    path
}

pub struct Server {
    pub child: Child,
    pub addr: SocketAddr,
    _stdout: BufReader<ChildStdout>,
}

impl Server {
    pub fn start(model: &Path) -> Server {
        let mut child = bin()
            .args(["serve", "--model", model.to_str().unwrap(), "--port", "0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("server starts");
        let mut out = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        out.read_line(&mut line).unwrap();
        let addr = line
            .strip_prefix("listening on ")
            .and_then(|rest| rest.split_whitespace().next())
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .parse()
            .unwrap();
        Server { child, addr, _stdout: out }
    }

    pub fn alive(&mut self) -> bool {
        self.child.try_wait().unwrap().is_none()
    }

    /// Sends raw request bytes and returns `(status, body)`; status 0 when the
    /// server closed the connection without answering.
    pub fn raw(&self, request: &[u8]) -> (u16, String) {
        let mut s = TcpStream::connect(self.addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
        // the server may stop reading early; a failed write still leaves a response to read
        let _ = s.write_all(request);
        let mut buf = Vec::new();
        let _ = s.read_to_end(&mut buf);
        let text = String::from_utf8_lossy(&buf).into_owned();
        let status = text.split_whitespace().nth(1).and_then(|c| c.parse().ok()).unwrap_or(0);
        let body = text.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
        (status, body)
    }

    /// Writes `request` and hangs up without reading.
    pub fn abandon(&self, request: &[u8]) {
        let mut s = TcpStream::connect(self.addr).unwrap();
        let _ = s.write_all(request);
    }

    pub fn post(&self, path: &str, body: &[u8]) -> (u16, String) {
        let mut req = format!(
            "POST {path} HTTP/1.1\r\nHost: {}\r\nContent-Type: application/octet-stream\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
            self.addr,
            body.len()
        )
        .into_bytes();
        req.extend_from_slice(body);
        self.raw(&req)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
