//! Counterfactual interventions on a trained or training encoder.
//!
//! Causal roles map onto the data as follows: `X` is the factual document,
//! `Z` its word-level realisation, `S` the inter-sentence structure and `Y`
//! the label. Structure is represented by the post-softmax attention maps
//! of the factual pass.
//!
//! * `do(Z = Z')` swaps in a synonym-substituted variant of the same
//!   document. It occupies the same slots, so position embeddings are kept.
//! * `do(X = X')` keeps the factual attention maps fixed and feeds the
//!   sentence vectors of a same-label document from another group.
//!
//! Both effects live in logit space: `nie = logit(do Z) - logit(factual)` and
//! `de = logit(factual) - logit(do X)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{pad_or_truncate, pad_to_mask, Corpus, EmbeddedDoc, Label, PaddedDoc, VariantKind};
use crate::encoder::{accumulate_backward, forward_with, Forward, HyperParams, Mode, ModelParams, Relations};
use crate::real::sigmoid;
use crate::train::bce_with_logits;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NieSign {
    /// `BCE(nie, y)`.
    Plus,
    /// `BCE(-nie, y)`, rewarding factual-over-counterfactual confidence the
    /// same way the direct-effect term does.
    Minus,
}

impl NieSign {
    pub fn value<T: Real>(self) -> T {
        match self {
            NieSign::Plus => T::one(),
            NieSign::Minus => -T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfConfig {
    pub nie_weight: f64,
    pub de_weight: f64,
    pub nie_sign: NieSign,
    /// Counterfactual draws per example, averaged in logit space.
    pub samples: usize,
    /// Per-sentence probability of the fallback perturbation.
    pub substitution_prob: f64,
    /// Size of the fallback perturbation relative to a unit sentence vector.
    pub substitution_scale: f64,
    /// Stop gradients through the factual branch of both effect terms.
    pub detach_factual: bool,
}

impl Default for CfConfig {
    fn default() -> Self {
        Self {
            nie_weight: 1.0,
            de_weight: 1.0,
            nie_sign: NieSign::Minus,
            samples: 1,
            substitution_prob: 0.30,
            substitution_scale: 0.3,
            detach_factual: false,
        }
    }
}

impl CfConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.nie_weight) || !finite_nonneg(self.de_weight) {
            return Err(Error::BadConfig("counterfactual weights must be finite and >= 0".into()));
        }
        if self.samples == 0 {
            return Err(Error::BadConfig("need at least one counterfactual sample".into()));
        }
        if !(0.0..=1.0).contains(&self.substitution_prob) || !finite_nonneg(self.substitution_scale) {
            return Err(Error::BadConfig("substitution probability must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Indexes a corpus for variant and partner lookup.
pub struct Sampler<'c> {
    corpus: &'c Corpus,
    variants: BTreeMap<&'c str, Vec<&'c EmbeddedDoc>>,
    originals: [Vec<&'c EmbeddedDoc>; 2],
}

impl<'c> Sampler<'c> {
    pub fn new(corpus: &'c Corpus) -> Self {
        let mut variants: BTreeMap<&str, Vec<&EmbeddedDoc>> = BTreeMap::new();
        let mut originals = [Vec::new(), Vec::new()];
        for doc in &corpus.docs {
            match doc.variant_kind {
                VariantKind::SynonymSub => variants.entry(doc.id.as_str()).or_default().push(doc),
                VariantKind::Original => originals[doc.label.as_u8() as usize].push(doc),
                _ => {}
            }
        }
        Self {
            corpus,
            variants,
            originals,
        }
    }

    pub fn corpus(&self) -> &'c Corpus {
        self.corpus
    }

    /// A uniformly chosen `SynonymSub` variant of `doc` with the same
    /// sentence count. Without one, each sentence is independently replaced
    /// with probability `substitution_prob` by
    /// `normalize(s + substitution_scale * u)`, `u` a random unit direction.
    pub fn select_z_variant<R: Rng + ?Sized>(&self, doc: &EmbeddedDoc, rng: &mut R, cfg: &CfConfig) -> EmbeddedDoc {
        let candidates: Vec<&EmbeddedDoc> = self
            .variants
            .get(doc.id.as_str())
            .map(|v| v.iter().copied().filter(|c| c.sent_count() == doc.sent_count()).collect())
            .unwrap_or_default();
        if let Some(v) = candidates.choose(rng) {
            return (*v).clone();
        }
        toy_substitution(doc, rng, cfg.substitution_prob, cfg.substitution_scale)
    }

    /// A uniformly chosen Original with the same label and a different
    /// group, drawn from a different domain when any such document exists.
    pub fn select_x_partner<R: Rng + ?Sized>(&self, doc: &EmbeddedDoc, rng: &mut R) -> Result<&'c EmbeddedDoc> {
        let eligible: Vec<&EmbeddedDoc> = self.originals[doc.label.as_u8() as usize]
            .iter()
            .copied()
            .filter(|c| c.group_id != doc.group_id)
            .collect();
        let other_domain: Vec<&EmbeddedDoc> = eligible
            .iter()
            .copied()
            .filter(|c| c.domain_id != doc.domain_id)
            .collect();
        let pool = if other_domain.is_empty() { &eligible } else { &other_domain };
        pool.choose(rng)
            .copied()
            .ok_or_else(|| Error::NoPartner(doc.id.clone()))
    }
}

fn toy_substitution<R: Rng + ?Sized>(doc: &EmbeddedDoc, rng: &mut R, prob: f64, scale: f64) -> EmbeddedDoc {
    let dim = doc.dim();
    let mut out = doc.embeddings().to_vec();
    for row in out.chunks_mut(dim) {
        if !(rng.random::<f64>() < prob) {
            continue;
        }
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let dir_norm = libm::sqrt(dir.iter().map(|v| v * v).sum::<f64>());
        let moved: Vec<f64> = row
            .iter()
            .zip(&dir)
            .map(|(s, u)| *s as f64 + scale * u / dir_norm)
            .collect();
        let norm = libm::sqrt(moved.iter().map(|v| v * v).sum::<f64>());
        for (r, m) in row.iter_mut().zip(&moved) {
            *r = if norm > 0.0 { (m / norm) as f32 } else { *m as f32 };
        }
    }
    doc.with_embeddings(VariantKind::SynonymSub, out)
        .expect("same shape, finite values")
}

/// The factual document and its two intervened counterparts.
#[derive(Debug, Clone, Copy)]
pub struct CausalRoles<'a> {
    pub factual: &'a EmbeddedDoc,
    pub z_variant: &'a EmbeddedDoc,
    pub x_partner: &'a EmbeddedDoc,
}

impl CausalRoles<'_> {
    /// Full role invariants. [`compute_effects`] only needs matching sentence
    /// counts, so null interventions (a document as its own partner) remain
    /// expressible.
    pub fn check(&self) -> Result<()> {
        if self.z_variant.sent_count() != self.factual.sent_count() {
            return Err(Error::InvalidDoc("word-level variant changes the sentence count".into()));
        }
        if self.x_partner.group_id == self.factual.group_id {
            return Err(Error::InvalidDoc("topic partner shares the factual group".into()));
        }
        if self.x_partner.label != self.factual.label {
            return Err(Error::InvalidDoc("topic partner has a different label".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectTerms<T> {
    pub logit_factual: T,
    pub logit_do_z: T,
    pub logit_do_x: T,
    pub effect_nie: T,
    pub effect_de: T,
}

/// Eval-mode logits for the factual pass and both interventions.
pub fn compute_effects<T: Real>(
    params: &ModelParams<T>,
    hyper: &HyperParams,
    roles: &CausalRoles<'_>,
) -> Result<EffectTerms<T>> {
    if roles.z_variant.sent_count() != roles.factual.sent_count() {
        return Err(Error::InvalidDoc("word-level variant changes the sentence count".into()));
    }
    let m = hyper.max_sentences;
    let factual = pad_or_truncate(roles.factual, m).cast::<T>();
    let z = pad_or_truncate(roles.z_variant, m).cast::<T>();
    let x = pad_to_mask(roles.x_partner, roles.factual.sent_count(), m).cast::<T>();
    let passes = EffectPasses::run(params, hyper, &factual, &[z], &[x], |_| Mode::Eval)?;
    Ok(passes.terms())
}

/// Pass that a dropout seed is requested for in [`EffectPasses::run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Factual,
    DoZ(usize),
    DoX(usize),
}

/// Forward passes behind one example's effect terms, kept for backprop.
pub struct EffectPasses<T> {
    pub factual: Forward<T>,
    pub do_z: Vec<Forward<T>>,
    pub do_x: Vec<Forward<T>>,
}

impl<T: Real> EffectPasses<T> {
    /// `do_x` may be empty (no partner); the direct effect is then zero.
    pub fn run(
        params: &ModelParams<T>,
        hyper: &HyperParams,
        factual: &PaddedDoc<T>,
        do_z: &[PaddedDoc<T>],
        do_x: &[PaddedDoc<T>],
        mode: impl Fn(Pass) -> Mode,
    ) -> Result<Self> {
        let f = forward_with(params, hyper, factual, mode(Pass::Factual), None)?;
        let z = do_z
            .iter()
            .enumerate()
            .map(|(k, p)| forward_with(params, hyper, p, mode(Pass::DoZ(k)), None))
            .collect::<Result<Vec<_>>>()?;
        let x = do_x
            .iter()
            .enumerate()
            .map(|(k, p)| forward_with(params, hyper, p, mode(Pass::DoX(k)), Some(&f.relations)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            factual: f,
            do_z: z,
            do_x: x,
        })
    }

    pub fn terms(&self) -> EffectTerms<T> {
        let lf = self.factual.logit;
        let lz = mean_logit(&self.do_z).unwrap_or(lf);
        let lx = mean_logit(&self.do_x).unwrap_or(lf);
        EffectTerms {
            logit_factual: lf,
            logit_do_z: lz,
            logit_do_x: lx,
            effect_nie: lz - lf,
            effect_de: lf - lx,
        }
    }

    /// Backpropagates upstream gradients on the two effects (and on the
    /// factual logit directly) into `grads`. Gradients of the direct-effect
    /// pass with respect to the frozen relations flow back into the factual
    /// softmax unless `detach_factual` is set.
    pub fn backward(
        &self,
        params: &ModelParams<T>,
        hyper: &HyperParams,
        d_factual_logit: T,
        d_nie: T,
        d_de: T,
        detach_factual: bool,
        grads: &mut ModelParams<T>,
    ) -> Result<()> {
        let mut d_relations: Option<Relations<T>> = None;
        if !self.do_x.is_empty() {
            let share = -d_de / T::lit(self.do_x.len() as f64);
            for pass in &self.do_x {
                let dr = accumulate_backward(params, hyper, &pass.cache, share, None, grads)?
                    .expect("fixed pass yields relation gradients");
                match d_relations.as_mut() {
                    None => d_relations = Some(dr),
                    Some(acc) => acc.add_assign(&dr),
                }
            }
        }
        if !self.do_z.is_empty() {
            let share = d_nie / T::lit(self.do_z.len() as f64);
            for pass in &self.do_z {
                accumulate_backward(params, hyper, &pass.cache, share, None, grads)?;
            }
        }
        let (d_lf, extra) = if detach_factual {
            (d_factual_logit, None)
        } else {
            let nie_part = if self.do_z.is_empty() { T::zero() } else { d_nie };
            let de_part = if self.do_x.is_empty() { T::zero() } else { d_de };
            (d_factual_logit - nie_part + de_part, d_relations.as_ref())
        };
        accumulate_backward(params, hyper, &self.factual.cache, d_lf, extra, grads)?;
        Ok(())
    }
}

fn mean_logit<T: Real>(passes: &[Forward<T>]) -> Option<T> {
    if passes.is_empty() {
        return None;
    }
    let sum = passes.iter().fold(T::zero(), |acc, p| acc + p.logit);
    Some(sum / T::lit(passes.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfLosses<T> {
    pub nie: T,
    pub de: T,
    /// d(nie loss)/d(effect_nie), weight included.
    pub d_nie: T,
    /// d(de loss)/d(effect_de), weight included.
    pub d_de: T,
}

/// `nie = w_nie * BCE(sign * effect_nie, y)`, `de = w_de * BCE(effect_de, y)`.
pub fn counterfactual_losses<T: Real>(effects: &EffectTerms<T>, label: Label, cfg: &CfConfig) -> CfLosses<T> {
    let y = label.target::<T>();
    let sign = cfg.nie_sign.value::<T>();
    let (w_nie, w_de) = (T::lit(cfg.nie_weight), T::lit(cfg.de_weight));
    let nie_arg = sign * effects.effect_nie;
    CfLosses {
        nie: w_nie * bce_with_logits(nie_arg, label),
        de: w_de * bce_with_logits(effects.effect_de, label),
        d_nie: w_nie * sign * (sigmoid(nie_arg) - y),
        d_de: w_de * (sigmoid(effects.effect_de) - y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use alloc::vec;

    fn doc(id: &str, label: Label, group: u32, domain: u32, n: usize, fill: f32) -> EmbeddedDoc {
        let emb = (0..n * 4).map(|i| fill + i as f32 * 0.1).collect();
        EmbeddedDoc::new(id, label, domain, group, VariantKind::Original, n, emb).unwrap()
    }

    fn effects(nie: f64, de: f64) -> EffectTerms<f64> {
        EffectTerms {
            logit_factual: 0.0,
            logit_do_z: nie,
            logit_do_x: -de,
            effect_nie: nie,
            effect_de: de,
        }
    }

    #[test]
    fn unique_variant_is_returned() {
        let mut c = Corpus::new(4);
        let d = doc("a", Label::Machine, 0, 0, 2, 1.0);
        let v = d.with_embeddings(VariantKind::SynonymSub, vec![0.5; 8]).unwrap();
        c.docs.extend([d.clone(), v.clone()]);
        let s = Sampler::new(&c);
        let mut rng = stream(&[1]);
        assert_eq!(s.select_z_variant(&d, &mut rng, &CfConfig::default()), v);
    }

    #[test]
    fn fallback_with_zero_probability_is_identity() {
        let mut c = Corpus::new(4);
        let d = doc("a", Label::Machine, 0, 0, 3, 1.0);
        c.docs.push(d.clone());
        let cfg = CfConfig {
            substitution_prob: 0.0,
            ..CfConfig::default()
        };
        let v = Sampler::new(&c).select_z_variant(&d, &mut stream(&[2]), &cfg);
        assert_eq!(v.embeddings(), d.embeddings());
        assert_eq!(v.variant_kind, VariantKind::SynonymSub);
    }

    #[test]
    fn fallback_perturbs_about_thirty_percent_of_sentences() {
        let mut c = Corpus::new(4);
        let d = doc("a", Label::Human, 0, 0, 1000, 0.0);
        c.docs.push(d.clone());
        let v = Sampler::new(&c).select_z_variant(&d, &mut stream(&[3]), &CfConfig::default());
        let changed = (0..1000).filter(|&i| v.sentence(i) != d.sentence(i)).count();
        let frac = changed as f64 / 1000.0;
        assert!((frac - 0.30).abs() <= 0.05, "{frac}");
    }

    #[test]
    fn unique_cross_group_partner() {
        let mut c = Corpus::new(4);
        let a = doc("a", Label::Machine, 0, 0, 2, 1.0);
        let b = doc("b", Label::Machine, 1, 0, 2, 2.0);
        c.docs.extend([a.clone(), b.clone(), doc("c", Label::Human, 1, 0, 2, 3.0), doc("d", Label::Human, 0, 0, 2, 4.0)]);
        let s = Sampler::new(&c);
        for seed in 0..10 {
            assert_eq!(s.select_x_partner(&a, &mut stream(&[seed])).unwrap(), &b);
        }
    }

    #[test]
    fn single_group_has_no_partner() {
        let mut c = Corpus::new(4);
        let a = doc("a", Label::Machine, 0, 0, 2, 1.0);
        c.docs.extend([a.clone(), doc("b", Label::Machine, 0, 1, 2, 2.0)]);
        assert!(matches!(
            Sampler::new(&c).select_x_partner(&a, &mut stream(&[0])),
            Err(Error::NoPartner(_))
        ));
    }

    #[test]
    fn zero_effect_costs_ln2() {
        for label in [Label::Human, Label::Machine] {
            let l = counterfactual_losses(&effects(0.0, 0.0), label, &CfConfig::default());
            assert!((l.nie - core::f64::consts::LN_2).abs() < 1e-12);
            assert!((l.de - core::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_direct_effect_is_cheap() {
        let l = counterfactual_losses(&effects(0.0, 10.0), Label::Machine, &CfConfig::default());
        assert!((l.de - 4.539_889_921_686_465e-5).abs() < 1e-12);
    }

    #[test]
    fn nie_gradient_matches_scalar_finite_difference() {
        for sign in [NieSign::Plus, NieSign::Minus] {
            for label in [Label::Human, Label::Machine] {
                let cfg = CfConfig {
                    nie_sign: sign,
                    nie_weight: 0.7,
                    ..CfConfig::default()
                };
                for e in [-2.0, -0.1, 0.0, 0.4, 3.0] {
                    let h = 1e-6;
                    let up = counterfactual_losses(&effects(e + h, 0.0), label, &cfg).nie;
                    let down = counterfactual_losses(&effects(e - h, 0.0), label, &cfg).nie;
                    let fd = (up - down) / (2.0 * h);
                    let g = counterfactual_losses(&effects(e, 0.0), label, &cfg).d_nie;
                    assert!((fd - g).abs() < 1e-6, "{fd} vs {g}");
                }
            }
        }
    }

    #[test]
    fn roles_check_catches_invariant_violations() {
        let a = doc("a", Label::Machine, 0, 0, 2, 1.0);
        let b = doc("b", Label::Machine, 1, 0, 2, 2.0);
        let short = doc("a", Label::Machine, 0, 0, 1, 1.0);
        let ok = CausalRoles { factual: &a, z_variant: &a, x_partner: &b };
        assert!(ok.check().is_ok());
        assert!(CausalRoles { x_partner: &a, ..ok }.check().is_err());
        assert!(CausalRoles { z_variant: &short, ..ok }.check().is_err());
    }
}
