//! Versioned text checkpoints.
//!
//! Layout, in this order:
//!
//! ```text
//! modeseek-checkpoint 1
//! step <generator updates so far>
//! config-begin
//! <resolved `section.key = value` lines>
//! config-end
//! stream conditions <s0> <s1> <s2> <s3>     # xoshiro256** state, hex
//! stream real ...
//! stream latent ...
//! adam g <t>
//! adam d <t>
//! param <name> <extent>x<extent>             # generator, then discriminator
//! <values>
//! m <name> <shape>                           # generator m/v pairs, then discriminator
//! <values>
//! v <name> <shape>
//! <values>
//! ```
//!
//! Values are space-separated with 17 significant digits, which round-trips
//! every `f64` exactly.

use std::path::Path;

use thiserror::Error;

use crate::config::{ConfigError, TrainConfig};
use crate::data::fmt_f64;
use crate::gan::{GanError, GanModel};
use crate::nn::{AdamState, ParamSet};
use crate::rng::Stream;
use crate::tensor::Tensor;
use crate::trainer::{TrainState, TrainStreams};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "modeseek-checkpoint";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub state: TrainState,
}

fn shape_str(t: &Tensor) -> String {
    t.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn push_tensor(out: &mut String, tag: &str, name: &str, t: &Tensor) {
    out.push_str(&format!("{tag} {name} {}\n", shape_str(t)));
    let vals: Vec<String> = t.data().iter().map(|&x| fmt_f64(x)).collect();
    out.push_str(&vals.join(" "));
    out.push('\n');
}

fn push_stream(out: &mut String, name: &str, s: &Stream) {
    let st = s.state();
    out.push_str(&format!(
        "stream {name} {:016x} {:016x} {:016x} {:016x}\n",
        st[0], st[1], st[2], st[3]
    ));
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let st = &self.state;
        let mut out = format!("{MAGIC} {FORMAT_VERSION}\nstep {}\nconfig-begin\n", st.step);
        out.push_str(&self.config.to_text());
        out.push_str("config-end\n");
        push_stream(&mut out, "conditions", &st.streams.conditions);
        push_stream(&mut out, "real", &st.streams.real);
        push_stream(&mut out, "latent", &st.streams.latent);
        out.push_str(&format!("adam g {}\nadam d {}\n", st.g_adam.t, st.d_adam.t));
        for p in st.model.g_params.iter().chain(st.model.d_params.iter()) {
            push_tensor(&mut out, "param", &p.name, &p.value);
        }
        for m in st.g_adam.moments.iter().chain(st.d_adam.moments.iter()) {
            push_tensor(&mut out, "m", &m.name, &m.m);
            push_tensor(&mut out, "v", &m.name, &m.v);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = Lines {
            inner: text.lines().enumerate(),
            line: 0,
        };

        let head = lines.next()?;
        let version = head
            .strip_prefix(MAGIC)
            .map(str::trim)
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| lines.err("not a checkpoint"))?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let step: u64 = lines.keyword("step")?;
        if lines.next()? != "config-begin" {
            return Err(lines.err("expected config-begin"));
        }
        let mut cfg_text = String::new();
        loop {
            let l = lines.next()?;
            if l == "config-end" {
                break;
            }
            cfg_text.push_str(l);
            cfg_text.push('\n');
        }
        let config = TrainConfig::from_text(&cfg_text)?;

        let conditions = lines.stream("conditions")?;
        let real = lines.stream("real")?;
        let latent = lines.stream("latent")?;
        let g_t: u64 = lines.keyword("adam g")?;
        let d_t: u64 = lines.keyword("adam d")?;

        let mixture = config.mixture().map_err(ConfigError::from)?;
        let mut model = GanModel::init(&config.model, 2, mixture.n_categories(), config.seed)?;
        lines.fill_params(&mut model.g_params)?;
        lines.fill_params(&mut model.d_params)?;
        let mut g_adam = AdamState::new(&model.g_params, config.adam);
        let mut d_adam = AdamState::new(&model.d_params, config.adam);
        g_adam.t = g_t;
        d_adam.t = d_t;
        for adam in [&mut g_adam, &mut d_adam] {
            for mom in &mut adam.moments {
                lines.tensor("m", &mom.name, &mut mom.m)?;
                lines.tensor("v", &mom.name, &mut mom.v)?;
            }
        }
        if let Some((i, extra)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
            return Err(CheckpointError::Parse {
                line: i + 1,
                msg: format!("unexpected trailing content {extra:?}"),
            });
        }

        Ok(Checkpoint {
            config,
            state: TrainState {
                model,
                g_adam,
                d_adam,
                step,
                streams: TrainStreams {
                    conditions,
                    real,
                    latent,
                },
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

struct Lines<'a, I: Iterator<Item = (usize, &'a str)>> {
    inner: I,
    line: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Lines<'a, I> {
    fn err(&self, msg: impl Into<String>) -> CheckpointError {
        CheckpointError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str, CheckpointError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim_end())
            }
            None => Err(self.err("unexpected end of checkpoint")),
        }
    }

    fn keyword<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CheckpointError> {
        let l = self.next()?;
        l.strip_prefix(key)
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| self.err(format!("expected `{key} <value>`")))
    }

    fn stream(&mut self, name: &str) -> Result<Stream, CheckpointError> {
        let l = self.next()?;
        let prefix = format!("stream {name} ");
        let words: Option<Vec<u64>> = l.strip_prefix(&prefix).map(|rest| {
            rest.split_whitespace()
                .filter_map(|w| u64::from_str_radix(w, 16).ok())
                .collect()
        });
        match words {
            Some(w) if w.len() == 4 => Ok(Stream::from_state([w[0], w[1], w[2], w[3]])),
            _ => Err(self.err(format!("expected stream {name} state"))),
        }
    }

    fn tensor(&mut self, tag: &str, name: &str, into: &mut Tensor) -> Result<(), CheckpointError> {
        let header = self.next()?;
        let expected = format!("{tag} {name} {}", shape_str(into));
        if header != expected {
            return Err(self.err(format!("expected `{expected}`, found `{header}`")));
        }
        let body = self.next()?;
        let vals: Result<Vec<f64>, _> = body.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|_| self.err("bad number"))?;
        if vals.len() != into.len() {
            return Err(self.err(format!("expected {} values, found {}", into.len(), vals.len())));
        }
        into.data_mut().copy_from_slice(&vals);
        Ok(())
    }

    fn fill_params(&mut self, params: &mut ParamSet) -> Result<(), CheckpointError> {
        for p in &mut params.params {
            self.tensor("param", &p.name, &mut p.value)?;
        }
        Ok(())
    }
}
