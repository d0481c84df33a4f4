//! Synthetic corpora where inter-sentence correlation is the class signal.
//!
//! Each document walks on the unit sphere:
//! `s_{i+1} = normalize(rho * s_i + sqrt(1 - rho^2) * e_i)` with `e_i` a
//! random unit direction, so consecutive-sentence cosine is about `rho`.
//! Machine documents use `rho_machine`, human documents `rho_human`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::doc::{Corpus, EmbeddedDoc, Label, VariantKind};
use super::toy::unit;
use crate::rng::{stream, tags, Stream};
use crate::{Error, Result};

pub const DOMAIN_NAMES: [&str; 4] = ["finance", "medicine", "reddit_eli5", "wikipedia_csai"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub dim: usize,
    pub max_sentences: usize,
    pub rho_machine: f64,
    pub rho_human: f64,
    pub seed: u64,
    /// Length of a fixed offset added to every sentence of machine
    /// documents. Zero disables it.
    pub nuisance: f64,
    /// Emit a `SynonymSub` variant per document carrying the offset-free
    /// sentences.
    pub variants: bool,
}

impl SynthConfig {
    pub fn new(n_docs: usize, dim: usize, max_sentences: usize, rho_machine: f64, rho_human: f64, seed: u64) -> Self {
        Self {
            n_docs,
            dim,
            max_sentences,
            rho_machine,
            rho_human,
            seed,
            nuisance: 0.0,
            variants: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho_human)
            || !(0.0..=1.0).contains(&self.rho_machine)
            || self.rho_human >= self.rho_machine
        {
            return Err(Error::BadConfig(format!(
                "need 0 <= rho_human < rho_machine <= 1, got {} and {}",
                self.rho_human, self.rho_machine
            )));
        }
        if self.dim == 0 || self.max_sentences == 0 {
            return Err(Error::BadConfig("dim and max sentences must be >= 1".into()));
        }
        if !self.nuisance.is_finite() || self.nuisance < 0.0 {
            return Err(Error::BadConfig("nuisance must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub fn synth_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut corpus = Corpus::new(cfg.dim);
    corpus.domain_names = DOMAIN_NAMES
        .iter()
        .enumerate()
        .map(|(i, n)| (i as u32, n.to_string()))
        .collect::<BTreeMap<_, _>>();

    // Independent of the seed so train and test splits share the direction.
    let offset: Vec<f64> = {
        let mut rng = stream(&[tags::SYNTH, u64::MAX]);
        unit(&gaussian(&mut rng, cfg.dim))
            .into_iter()
            .map(|v| v as f64 * cfg.nuisance)
            .collect()
    };

    let lower = cfg.max_sentences.min(4);
    for i in 0..cfg.n_docs {
        let mut rng = stream(&[tags::SYNTH, cfg.seed, i as u64]);
        let label = if i % 2 == 0 { Label::Human } else { Label::Machine };
        let rho = match label {
            Label::Machine => cfg.rho_machine,
            Label::Human => cfg.rho_human,
        };
        let n = rng.random_range(lower..=cfg.max_sentences);
        let clean = ar1_walk(&mut rng, n, cfg.dim, rho);

        let shifted: Vec<f32> = if label == Label::Machine && cfg.nuisance > 0.0 {
            clean
                .chunks(cfg.dim)
                .flat_map(|row| row.iter().zip(&offset).map(|(v, o)| (*v as f64 + o) as f32))
                .collect()
        } else {
            clean.clone()
        };

        let id = format!("synth-{i:06}");
        let doc = EmbeddedDoc::new(
            id,
            label,
            ((i / 2) % 4) as u32,
            (i / 4) as u32,
            VariantKind::Original,
            n,
            shifted,
        )?;
        if cfg.variants {
            let variant = doc.with_embeddings(VariantKind::SynonymSub, clean)?;
            corpus.docs.push(doc);
            corpus.docs.push(variant);
        } else {
            corpus.docs.push(doc);
        }
    }
    Ok(corpus)
}

fn gaussian(rng: &mut Stream, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn ar1_walk(rng: &mut Stream, n: usize, dim: usize, rho: f64) -> Vec<f32> {
    let innovation = libm::sqrt(1.0 - rho * rho);
    let mut out = Vec::with_capacity(n * dim);
    let mut current: Vec<f64> = unit(&gaussian(rng, dim)).into_iter().map(f64::from).collect();
    for i in 0..n {
        if i > 0 {
            let eps = unit(&gaussian(rng, dim));
            let next: Vec<f64> = current
                .iter()
                .zip(&eps)
                .map(|(s, e)| rho * s + innovation * *e as f64)
                .collect();
            current = unit(&next).into_iter().map(f64::from).collect();
        }
        out.extend(current.iter().map(|&v| v as f32));
    }
    out
}
