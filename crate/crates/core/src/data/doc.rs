use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Real, Result};

pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Human = 0,
    Machine = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Human),
            1 => Some(Label::Machine),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn target<T: Real>(self) -> T {
        match self {
            Label::Human => T::zero(),
            Label::Machine => T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VariantKind {
    Original = 0,
    SynonymSub = 1,
    Translated = 2,
    Other = 3,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::Original,
        VariantKind::SynonymSub,
        VariantKind::Translated,
        VariantKind::Other,
    ];

    pub fn from_u32(v: u32) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn as_u32(self) -> u32 {
        self as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Original => "original",
            VariantKind::SynonymSub => "synonym_sub",
            VariantKind::Translated => "translated",
            VariantKind::Other => "other",
        }
    }
}

/// One document as `sent_count` sentence vectors of width `dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDoc {
    pub id: String,
    pub label: Label,
    pub domain_id: u32,
    pub group_id: u32,
    pub variant_kind: VariantKind,
    sent_count: usize,
    embeddings: Vec<f32>,
}

impl EmbeddedDoc {
    pub fn new(
        id: impl Into<String>,
        label: Label,
        domain_id: u32,
        group_id: u32,
        variant_kind: VariantKind,
        sent_count: usize,
        embeddings: Vec<f32>,
    ) -> Result<Self> {
        let id = id.into();
        if sent_count == 0 {
            return Err(Error::InvalidDoc(format!("`{id}` has no sentences")));
        }
        if embeddings.is_empty() || embeddings.len() % sent_count != 0 {
            return Err(Error::InvalidDoc(format!(
                "`{id}`: {} values do not split into {sent_count} rows",
                embeddings.len()
            )));
        }
        if let Some(pos) = embeddings.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDoc(format!(
                "`{id}`: non-finite value at index {pos}"
            )));
        }
        Ok(Self {
            id,
            label,
            domain_id,
            group_id,
            variant_kind,
            sent_count,
            embeddings,
        })
    }

    pub fn sent_count(&self) -> usize {
        self.sent_count
    }

    pub fn dim(&self) -> usize {
        self.embeddings.len() / self.sent_count
    }

    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn sentence(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.embeddings[i * d..(i + 1) * d]
    }

    /// Same metadata, new sentence vectors (same shape required).
    pub fn with_embeddings(&self, variant_kind: VariantKind, embeddings: Vec<f32>) -> Result<Self> {
        if embeddings.len() != self.embeddings.len() {
            return Err(Error::InvalidDoc(format!(
                "`{}`: replacement embeddings have the wrong length",
                self.id
            )));
        }
        Self::new(
            self.id.clone(),
            self.label,
            self.domain_id,
            self.group_id,
            variant_kind,
            self.sent_count,
            embeddings,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dim: usize,
    pub docs: Vec<EmbeddedDoc>,
    pub domain_names: BTreeMap<u32, String>,
}

impl Corpus {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            docs: Vec::new(),
            domain_names: BTreeMap::new(),
        }
    }

    /// Checks the shared width, `(id, variant_kind)` uniqueness and that every
    /// variant has an Original with the same id.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDoc("corpus dim is zero".into()));
        }
        let mut seen = BTreeSet::new();
        for doc in &self.docs {
            if doc.dim() != self.dim {
                return Err(Error::InvalidDoc(format!(
                    "`{}` has dim {} but the corpus has dim {}",
                    doc.id,
                    doc.dim(),
                    self.dim
                )));
            }
            if !seen.insert((doc.id.as_str(), doc.variant_kind)) {
                return Err(Error::InvalidDoc(format!(
                    "duplicate ({}, {}) pair",
                    doc.id,
                    doc.variant_kind.name()
                )));
            }
        }
        for doc in &self.docs {
            if doc.variant_kind != VariantKind::Original
                && !seen.contains(&(doc.id.as_str(), VariantKind::Original))
            {
                return Err(Error::InvalidDoc(format!(
                    "variant `{}` ({}) has no Original",
                    doc.id,
                    doc.variant_kind.name()
                )));
            }
        }
        Ok(())
    }

    pub fn originals(&self) -> impl Iterator<Item = &EmbeddedDoc> {
        self.docs
            .iter()
            .filter(|d| d.variant_kind == VariantKind::Original)
    }

    pub fn domain_name(&self, domain_id: u32) -> String {
        self.domain_names
            .get(&domain_id)
            .cloned()
            .unwrap_or_else(|| format!("domain_{domain_id}"))
    }
}

/// Slot 0 is the `cls` position; slots `1..=sent_count` hold sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedDoc<T = f32> {
    pub max_sentences: usize,
    pub dim: usize,
    pub slots: Vec<T>,
    pub mask: Vec<bool>,
}

impl<T: Real> PaddedDoc<T> {
    pub fn seq_len(&self) -> usize {
        self.max_sentences + 1
    }

    pub fn slot(&self, i: usize) -> &[T] {
        &self.slots[i * self.dim..(i + 1) * self.dim]
    }

    pub fn slot_mut(&mut self, i: usize) -> &mut [T] {
        let d = self.dim;
        &mut self.slots[i * d..(i + 1) * d]
    }

    pub fn active(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count() - 1
    }

    pub fn cast<U: Real>(&self) -> PaddedDoc<U> {
        PaddedDoc {
            max_sentences: self.max_sentences,
            dim: self.dim,
            slots: self.slots.iter().map(|v| U::lit(v.to_f64_lossless())).collect(),
            mask: self.mask.clone(),
        }
    }
}

/// Lays the first `min(sent_count, max_sentences)` sentences into slots
/// `1..`; trailing sentences beyond `max_sentences` are dropped.
pub fn pad_or_truncate(doc: &EmbeddedDoc, max_sentences: usize) -> PaddedDoc<f32> {
    pad_to_mask(doc, doc.sent_count(), max_sentences)
}

/// Pads `doc` under the mask of a document with `mask_sentences` sentences.
/// Rows of `doc` past its own length are zero but still unmasked.
pub fn pad_to_mask(doc: &EmbeddedDoc, mask_sentences: usize, max_sentences: usize) -> PaddedDoc<f32> {
    let dim = doc.dim();
    let len = max_sentences + 1;
    let active = mask_sentences.min(max_sentences);
    let mut slots = vec![0.0f32; len * dim];
    for i in 0..active.min(doc.sent_count()) {
        slots[(i + 1) * dim..(i + 2) * dim].copy_from_slice(doc.sentence(i));
    }
    let mask = (0..len).map(|i| i <= active).collect();
    PaddedDoc {
        max_sentences,
        dim,
        slots,
        mask,
    }
}
