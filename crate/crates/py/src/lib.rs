//! Python bindings: vocabulary, model training, loading and decoding, and
//! the evaluation metrics and statistics.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use mtaf::corpus::{load_rdg, rdg_context, rdg_example, write_rdg, AffectTarget, TrainingExample};
use mtaf::generator::{generate as decode, strip_eos, DecodeConfig, Strategy};
use mtaf::model::{init, predict_affect as affect_head, AffectPrediction, ModelConfig, ModelParams, Variant};
use mtaf::synthetic::{synthetic_rdg, SyntheticConfig};
use mtaf::tokenizer::{TokenId, Vocab as CoreVocab};
use mtaf::trainer::{load_checkpoint, save_checkpoint, train as core_train, Checkpoint, Corpora, TrainConfig};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts a serializable value into plain Python objects via JSON.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn affect_target(name: &str) -> PyResult<AffectTarget> {
    AffectTarget::ALL
        .into_iter()
        .find(|a| a.as_str() == name)
        .ok_or_else(|| {
            err(format!(
                "unknown affect {name:?}; expected excited, indifferent or impatient"
            ))
        })
}

fn variant(name: &str) -> PyResult<Variant> {
    match name {
        "lm_only" => Ok(Variant::LmOnly),
        "multitask" => Ok(Variant::Multitask),
        other => Err(err(format!("unknown variant {other:?}; expected lm_only or multitask"))),
    }
}

/// Word-level vocabulary with the special and affect tokens.
#[pyclass(module = "mtaf_py", frozen)]
struct Vocab {
    inner: CoreVocab,
}

#[pymethods]
impl Vocab {
    #[new]
    #[pyo3(signature = (texts, max_vocab = 512))]
    fn new(texts: Vec<String>, max_vocab: usize) -> PyResult<Self> {
        Ok(Self {
            inner: CoreVocab::fit(&texts, max_vocab).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreVocab::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn encode(&self, text: &str) -> Vec<TokenId> {
        self.inner.encode(text)
    }

    fn decode(&self, ids: Vec<TokenId>) -> PyResult<String> {
        self.inner.decode(&ids).map_err(err)
    }

    #[getter]
    fn sha256(&self) -> String {
        self.inner.hash()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Vocab(len={})", self.inner.len())
    }
}

/// Decoder-only transformer with an optional affect head.
#[pyclass(module = "mtaf_py", frozen)]
struct Model {
    params: ModelParams<f32>,
    checkpoint: Option<Checkpoint>,
}

impl Model {
    fn context(&self, vocab: &Vocab, description: &str, affect: &str) -> PyResult<Vec<TokenId>> {
        let ctx = rdg_context(description, affect_target(affect)?, &vocab.inner);
        if ctx.len() >= self.params.config.max_seq_len {
            return Err(err(format!(
                "context of {} tokens leaves no room under max_seq_len {}",
                ctx.len(),
                self.params.config.max_seq_len
            )));
        }
        Ok(ctx)
    }

    fn example(&self, vocab: &Vocab, description: &str, affect: &str, response: &str) -> PyResult<TrainingExample> {
        let context = self.context(vocab, description, affect)?;
        let context_len = context.len();
        let mut input_ids = context;
        input_ids.extend(vocab.inner.encode(response));
        input_ids.push(vocab.inner.eos());
        if input_ids.len() > self.params.config.max_seq_len {
            return Err(err(format!(
                "sequence of {} tokens exceeds max_seq_len {}",
                input_ids.len(),
                self.params.config.max_seq_len
            )));
        }
        Ok(TrainingExample {
            target_mask: (0..input_ids.len()).map(|p| p >= context_len).collect(),
            input_ids,
            affect: None,
            context_len,
            group: String::new(),
        })
    }
}

#[pymethods]
impl Model {
    /// Freshly initialized micro model.
    #[staticmethod]
    #[pyo3(signature = (vocab, max_seq_len = 48, variant = "multitask", seed = 0))]
    fn init(vocab: &Vocab, max_seq_len: usize, variant: &str, seed: u64) -> PyResult<Self> {
        let config = ModelConfig {
            variant: self::variant(variant)?,
            ..ModelConfig::micro(vocab.inner.len(), max_seq_len)
        };
        Ok(Self {
            params: init(&config, seed).map_err(err)?,
            checkpoint: None,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ckpt = load_checkpoint(path).map_err(err)?;
        Ok(Self {
            params: ckpt.params.clone(),
            checkpoint: Some(ckpt),
        })
    }

    /// Writes the checkpoint; only trained or loaded models carry one.
    fn save(&self, path: &str) -> PyResult<()> {
        let ckpt = self
            .checkpoint
            .as_ref()
            .ok_or_else(|| err("an untrained model has no checkpoint to save"))?;
        save_checkpoint(ckpt, path).map_err(err)
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.params.config)
    }

    /// Decodes a response for a scenario description and affect target.
    #[pyo3(signature = (vocab, description, affect, strategy = "top_k", k = 25, p = 0.9, temperature = 1.0, max_new_tokens = 24, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        &self,
        vocab: &Vocab,
        description: &str,
        affect: &str,
        strategy: &str,
        k: usize,
        p: f64,
        temperature: f64,
        max_new_tokens: usize,
        seed: u64,
    ) -> PyResult<String> {
        let strategy = match strategy {
            "greedy" => Strategy::Greedy,
            "top_k" => Strategy::TopK { k },
            "nucleus" => Strategy::Nucleus { p },
            other => {
                return Err(err(format!(
                    "unknown strategy {other:?}; expected greedy, top_k or nucleus"
                )))
            }
        };
        let cfg = DecodeConfig {
            strategy,
            max_new_tokens,
            temperature,
            seed,
        };
        let ctx = self.context(vocab, description, affect)?;
        let out = decode(&self.params, &vocab.inner, &ctx, &cfg).map_err(err)?;
        vocab.inner.decode(&strip_eos(&out, &vocab.inner)).map_err(err)
    }

    /// Affect score, or class logits for a classification head.
    fn predict_affect<'py>(
        &self,
        py: Python<'py>,
        vocab: &Vocab,
        description: &str,
        affect: &str,
        response: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let ex = self.example(vocab, description, affect, response)?;
        match affect_head(&self.params, &ex.input_ids).map_err(err)? {
            AffectPrediction::Score(s) => Ok(s.into_pyobject(py)?.into_any()),
            AffectPrediction::Logits(l) => Ok(l.into_pyobject(py)?.into_any()),
        }
    }

    /// Pooled per-token perplexity over (description, affect, response) triples.
    fn perplexity(&self, vocab: &Vocab, items: Vec<(String, String, String)>) -> PyResult<f64> {
        let data = items
            .iter()
            .map(|(d, a, r)| self.example(vocab, d, a, r))
            .collect::<PyResult<Vec<_>>>()?;
        mtaf::metrics::perplexity(&self.params, &data).map_err(err)
    }
}

/// Trains a micro model on every utterance of an RDG-format file.
#[pyfunction]
#[pyo3(signature = (vocab, rdg_path, variant = "multitask", epochs = 10, learning_rate = 3e-3, batch_size = 8, seed = 0, max_seq_len = 48))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    vocab: &Vocab,
    rdg_path: &str,
    variant: &str,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    seed: u64,
    max_seq_len: usize,
) -> PyResult<Model> {
    let rdg = load_rdg(rdg_path).map_err(err)?;
    let examples = rdg
        .utterances()
        .iter()
        .map(|u| {
            rdg_example(
                u,
                rdg.scenario(&u.scenario_id).expect("resolved at load"),
                &vocab.inner,
                max_seq_len,
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let model = Model::init(vocab, max_seq_len, variant, seed)?;
    let cfg = TrainConfig {
        learning_rate,
        batch_size,
        epochs,
        seed,
        validation_fraction: 0.0,
        ..TrainConfig::default()
    };
    let corpora = Corpora {
        rdg: Some(examples),
        ed: None,
    };
    let (ckpt, _) = py
        .detach(|| core_train(&corpora, model.params, &cfg, &vocab.inner))
        .map_err(err)?;
    Ok(Model {
        params: ckpt.params.clone(),
        checkpoint: Some(ckpt),
    })
}

/// Writes a synthetic RDG-format corpus and returns its utterance texts.
#[pyfunction]
#[pyo3(signature = (path, scenarios = 12, per_affect = 4, seed = 0))]
fn write_synthetic_rdg(path: &str, scenarios: usize, per_affect: usize, seed: u64) -> PyResult<Vec<String>> {
    let cfg = SyntheticConfig {
        n_scenarios: scenarios,
        utterances_per_affect: [per_affect; 3],
        seed,
        ..SyntheticConfig::default()
    };
    let rdg = synthetic_rdg(&cfg).map_err(err)?;
    let file = std::fs::File::create(path).map_err(err)?;
    write_rdg(&rdg, std::io::BufWriter::new(file)).map_err(err)?;
    Ok(rdg
        .scenarios()
        .iter()
        .map(|s| s.description.clone())
        .chain(rdg.utterances().iter().map(|u| u.text.clone()))
        .collect())
}

/// Corpus BLEU of one tokenized candidate against tokenized references.
#[pyfunction]
#[pyo3(signature = (candidate, references, max_n = 4, smooth = false))]
fn bleu(candidate: Vec<String>, references: Vec<Vec<String>>, max_n: usize, smooth: bool) -> PyResult<f64> {
    Ok(mtaf::metrics::bleu(&candidate, &references, max_n, smooth)
        .map_err(err)?
        .score)
}

/// exp of the token-weighted mean of (mean NLL, token count) parts.
#[pyfunction]
fn pooled_perplexity(parts: Vec<(f64, usize)>) -> PyResult<f64> {
    mtaf::metrics::pooled_perplexity(&parts).map_err(err)
}

#[pyfunction]
fn anova_one_way<'py>(py: Python<'py>, groups: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &mtaf::stats::anova_one_way(&groups).map_err(err)?)
}

#[pyfunction]
fn anova_two_way<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    a: Vec<String>,
    b: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &mtaf::stats::anova_two_way(&values, &a, &b).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (groups, alpha = 0.05))]
fn tukey_hsd<'py>(py: Python<'py>, groups: Vec<Vec<f64>>, alpha: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &mtaf::stats::tukey_hsd(&groups, alpha).map_err(err)?)
}

#[pyfunction]
fn spearman<'py>(py: Python<'py>, x: Vec<f64>, y: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &mtaf::stats::spearman(&x, &y).map_err(err)?)
}

#[pyfunction]
fn studentized_range_cdf(q: f64, k: usize, df: f64) -> PyResult<f64> {
    mtaf::stats::studentized_range_cdf(q, k, df).map_err(err)
}

#[pymodule]
fn mtaf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", mtaf::VERSION)?;
    m.add_class::<Vocab>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(write_synthetic_rdg, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(pooled_perplexity, m)?)?;
    m.add_function(wrap_pyfunction!(anova_one_way, m)?)?;
    m.add_function(wrap_pyfunction!(anova_two_way, m)?)?;
    m.add_function(wrap_pyfunction!(tukey_hsd, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(studentized_range_cdf, m)?)?;
    Ok(())
}
