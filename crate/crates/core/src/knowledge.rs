//! Durable store of agent specifications, training statistics and cached
//! per-sample outputs.
//!
//! File layout (`LGRAD-KB v1`), one item per line:
//!
//! ```text
//! LGRAD-KB v1 <fingerprint-hex> <n_agents> <d_img>
//! agent <id> spec <8 bits> loss <count> <hex-floats...>
//! err <n_samples> <hex-floats...>
//! out <sample_id> <d_img hex-floats...>      (n_samples lines per agent)
//! checksum <fnv1a-hex>
//! ```
//!
//! The `err` line carries the per-sample reconstruction errors; the
//! trailer hashes every preceding byte.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::spec::AgentSpec;
use crate::textio::{push_hex_values, read_container, ContainerWriter, FormatError};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("expected {expected} outputs (one per training sample), got {got}")]
    SampleCount { expected: usize, got: usize },
    #[error("expected {expected} per-sample errors, got {got}")]
    ErrorCount { expected: usize, got: usize },
    #[error("dimension mismatch at index {0}")]
    DimensionMismatch(usize),
    #[error("output {index} has value {value} outside [0, 1]")]
    OutputRange { index: usize, value: f64 },
    #[error("reconstruction error {index} is {value}, expected finite and non-negative")]
    BadError { index: usize, value: f64 },
    #[error("spec must carry all 8 traits, got [{0}]")]
    PartialSpec(String),
    #[error("knowledge base is empty")]
    Empty,
    #[error("unknown agent id {0}")]
    UnknownAgent(usize),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub sample_id: usize,
    pub output: Vec<f64>,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeRecord {
    pub agent_id: usize,
    pub spec: AgentSpec,
    pub outputs: Vec<SampleOutput>,
    pub training_loss_history: Vec<f64>,
}

impl KnowledgeRecord {
    /// Mean of the last `window` training losses (0 when no history).
    pub fn recent_loss(&self, window: usize) -> f64 {
        let h = &self.training_loss_history;
        if h.is_empty() {
            return 0.0;
        }
        let tail = &h[h.len().saturating_sub(window.max(1))..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    records: Vec<KnowledgeRecord>,
    dataset_fingerprint: u64,
    n_samples: usize,
    d_img: Option<usize>,
}

impl KnowledgeBase {
    /// Empty knowledge base bound to a training set of `n_samples` samples.
    pub fn new(dataset_fingerprint: u64, n_samples: usize) -> Self {
        KnowledgeBase {
            records: Vec::new(),
            dataset_fingerprint,
            n_samples,
            d_img: None,
        }
    }

    pub fn records(&self) -> &[KnowledgeRecord] {
        &self.records
    }

    pub fn record(&self, agent_id: usize) -> Result<&KnowledgeRecord, KbError> {
        self.records
            .iter()
            .find(|r| r.agent_id == agent_id)
            .ok_or(KbError::UnknownAgent(agent_id))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dataset_fingerprint(&self) -> u64 {
        self.dataset_fingerprint
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn d_img(&self) -> Option<usize> {
        self.d_img
    }

    /// Appends an agent and returns its freshly allocated id.
    pub fn record_agent(
        &mut self,
        spec: AgentSpec,
        outputs: Vec<Vec<f64>>,
        errors: Vec<f64>,
        training_loss_history: Vec<f64>,
    ) -> Result<usize, KbError> {
        if !spec.is_full() {
            return Err(KbError::PartialSpec(spec.trait_names()));
        }
        if outputs.len() != self.n_samples {
            return Err(KbError::SampleCount {
                expected: self.n_samples,
                got: outputs.len(),
            });
        }
        if errors.len() != self.n_samples {
            return Err(KbError::ErrorCount {
                expected: self.n_samples,
                got: errors.len(),
            });
        }
        let d_img = self.d_img.or(outputs.first().map(Vec::len));
        for (index, out) in outputs.iter().enumerate() {
            if Some(out.len()) != d_img {
                return Err(KbError::DimensionMismatch(index));
            }
            if let Some(&value) = out.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(KbError::OutputRange { index, value });
            }
        }
        if let Some((index, &value)) = errors
            .iter()
            .enumerate()
            .find(|(_, e)| !e.is_finite() || **e < 0.0)
        {
            return Err(KbError::BadError { index, value });
        }

        let agent_id = self.records.len();
        let outputs = outputs
            .into_iter()
            .zip(errors)
            .enumerate()
            .map(|(sample_id, (output, error))| SampleOutput {
                sample_id,
                output,
                error,
            })
            .collect();
        self.records.push(KnowledgeRecord {
            agent_id,
            spec,
            outputs,
            training_loss_history,
        });
        self.d_img = d_img;
        Ok(agent_id)
    }

    /// Sub-knowledge-base over the given agents, renumbered 0..k in order.
    pub fn subset(&self, agent_ids: &[usize]) -> Result<KnowledgeBase, KbError> {
        let mut records = Vec::with_capacity(agent_ids.len());
        for (new_id, &id) in agent_ids.iter().enumerate() {
            let mut r = self.record(id)?.clone();
            r.agent_id = new_id;
            records.push(r);
        }
        Ok(KnowledgeBase {
            records,
            ..self.clone_header()
        })
    }

    fn clone_header(&self) -> KnowledgeBase {
        KnowledgeBase {
            records: Vec::new(),
            dataset_fingerprint: self.dataset_fingerprint,
            n_samples: self.n_samples,
            d_img: self.d_img,
        }
    }

    pub fn to_text(&self) -> Result<String, KbError> {
        let d_img = match (self.records.is_empty(), self.d_img) {
            (false, Some(d)) => d,
            _ => return Err(KbError::Empty),
        };
        let mut w = ContainerWriter::new();
        w.line(&format!(
            "LGRAD-KB v1 {:016x} {} {}",
            self.dataset_fingerprint,
            self.records.len(),
            d_img
        ));
        for r in &self.records {
            let mut line = format!(
                "agent {} spec {} loss {}",
                r.agent_id,
                r.spec,
                r.training_loss_history.len()
            );
            push_hex_values(&mut line, &r.training_loss_history);
            w.line(&line);

            let errors: Vec<f64> = r.outputs.iter().map(|o| o.error).collect();
            let mut line = format!("err {}", errors.len());
            push_hex_values(&mut line, &errors);
            w.line(&line);

            for o in &r.outputs {
                let mut line = format!("out {}", o.sample_id);
                push_hex_values(&mut line, &o.output);
                w.line(&line);
            }
        }
        Ok(w.finish())
    }

    pub fn from_text(text: &str) -> Result<KnowledgeBase, KbError> {
        let lines = read_container(text)?;
        let header = lines
            .first()
            .ok_or_else(|| FormatError::parse(1, "missing header"))?;
        let mut f = header.fields();
        f.expect("LGRAD-KB")?;
        f.expect("v1")?;
        let fingerprint = f.next_hex_u64("fingerprint")?;
        let n_agents = f.next_usize("agent count")?;
        let d_img = f.next_usize("d_img")?;
        f.finish()?;
        if n_agents == 0 {
            return Err(header.error("agent count must be positive").into());
        }

        let body = &lines[1..];
        if body.len() % n_agents != 0 {
            return Err(FormatError::parse(
                lines.len(),
                format!(
                    "{} record lines do not split across {n_agents} agents",
                    body.len()
                ),
            )
            .into());
        }
        let per_agent = body.len() / n_agents;
        if per_agent < 2 {
            return Err(FormatError::parse(lines.len(), "truncated agent records").into());
        }
        let n_samples = per_agent - 2;
        let mut kb = KnowledgeBase::new(fingerprint, n_samples);
        kb.d_img = Some(d_img);

        for (expected_id, chunk) in body.chunks(per_agent).enumerate() {
            let agent_line = &chunk[0];
            let mut f = agent_line.fields();
            f.expect("agent")?;
            let id = f.next_usize("agent id")?;
            if id != expected_id {
                return Err(agent_line
                    .error(format!("expected agent id {expected_id}, found {id}"))
                    .into());
            }
            f.expect("spec")?;
            let spec: AgentSpec = f
                .next_str("spec bits")?
                .parse()
                .map_err(|e: crate::spec::SpecError| agent_line.error(e.to_string()))?;
            f.expect("loss")?;
            let count = f.next_usize("loss count")?;
            let history = f.hex_values(count, "loss value")?;
            f.finish()?;

            let err_line = &chunk[1];
            let mut f = err_line.fields();
            f.expect("err")?;
            let count = f.next_usize("error count")?;
            if count != n_samples {
                return Err(err_line
                    .error(format!("expected {n_samples} errors, found {count}"))
                    .into());
            }
            let errors = f.hex_values(count, "error value")?;
            f.finish()?;

            let mut outputs = Vec::with_capacity(n_samples);
            for (sample_id, line) in chunk[2..].iter().enumerate() {
                let mut f = line.fields();
                f.expect("out")?;
                let sid = f.next_usize("sample id")?;
                if sid != sample_id {
                    return Err(line
                        .error(format!("expected sample id {sample_id}, found {sid}"))
                        .into());
                }
                outputs.push(f.hex_values(d_img, "output value")?);
                f.finish()?;
            }
            kb.record_agent(spec, outputs, errors, history)
                .map_err(|e| agent_line.error(e.to_string()))?;
        }
        Ok(kb)
    }

    pub fn save(&self, path: &Path) -> Result<(), KbError> {
        let text = self.to_text()?;
        fs::write(path, text).map_err(|source| KbError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<KnowledgeBase, KbError> {
        let text = fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.display().to_string(),
            source,
        })?;
        KnowledgeBase::from_text(&text)
    }
}
