//! `SEB1` corpus bundle. All integers little-endian:
//!
//! ```text
//! "SEB1" | u32 version=1 | u32 dim | u32 doc_count | u32 manifest_len | manifest JSON
//! per doc: u32 id_len | id | u8 label | u32 domain_id | u32 group_id
//!          | u32 variant_kind | u32 sent_count | sent_count*dim f32 (row-major)
//! ```
//!
//! The manifest is `{"domain_names": {"<id>": "<name>", ...}}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sentstruct_core::data::{Corpus, EmbeddedDoc, Label, VariantKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MAGIC: &[u8; 4] = b"SEB1";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize, Default)]
struct Manifest {
    #[serde(default)]
    domain_names: BTreeMap<String, String>,
}

pub fn write_seb(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CliError> {
    let path = path.as_ref();
    let bytes = encode(corpus)?;
    fs::write(path, bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn read_seb(path: impl AsRef<Path>) -> Result<Corpus, CliError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}

pub fn encode(corpus: &Corpus) -> Result<Vec<u8>, CliError> {
    corpus.validate()?;
    let manifest = Manifest {
        domain_names: corpus
            .domain_names
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
    };
    let manifest = serde_json::to_vec(&manifest).expect("manifest serialises");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [VERSION, u32_of(corpus.dim)?, u32_of(corpus.docs.len())?, u32_of(manifest.len())?] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&manifest);
    for doc in &corpus.docs {
        out.extend_from_slice(&u32_of(doc.id.len())?.to_le_bytes());
        out.extend_from_slice(doc.id.as_bytes());
        out.push(doc.label.as_u8());
        for v in [doc.domain_id, doc.group_id, doc.variant_kind.as_u32(), u32_of(doc.sent_count())?] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in doc.embeddings() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_of(n: usize) -> Result<u32, CliError> {
    u32::try_from(n).map_err(|_| CliError::Data(format!("{n} does not fit the u32 fields of SEB")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CliError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            CliError::Corrupt(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8, CliError> {
        Ok(self.take(1, what)?[0])
    }
}

pub fn decode(bytes: &[u8]) -> Result<Corpus, CliError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CliError::NotSeb);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CliError::Corrupt(format!("unsupported SEB version {version}")));
    }
    let dim = r.u32("dim")? as usize;
    let doc_count = r.u32("doc count")? as usize;
    let manifest_len = r.u32("manifest length")? as usize;
    let manifest: Manifest = serde_json::from_slice(r.take(manifest_len, "manifest")?)
        .map_err(|e| CliError::Corrupt(format!("manifest: {e}")))?;
    let mut corpus = Corpus::new(dim);
    for (k, v) in manifest.domain_names {
        let id = k
            .parse::<u32>()
            .map_err(|_| CliError::Corrupt(format!("manifest domain key `{k}` is not an integer")))?;
        corpus.domain_names.insert(id, v);
    }
    if dim == 0 && doc_count > 0 {
        return Err(CliError::Corrupt("dim is zero".into()));
    }

    for _ in 0..doc_count {
        let id_len = r.u32("id length")? as usize;
        let id = std::str::from_utf8(r.take(id_len, "id")?)
            .map_err(|_| CliError::Corrupt("document id is not UTF-8".into()))?
            .to_owned();
        let label = Label::from_u8(r.u8("label")?)
            .ok_or_else(|| CliError::Corrupt(format!("`{id}`: label must be 0 or 1")))?;
        let domain_id = r.u32("domain id")?;
        let group_id = r.u32("group id")?;
        let kind = r.u32("variant kind")?;
        let variant_kind = VariantKind::from_u32(kind)
            .ok_or_else(|| CliError::Corrupt(format!("`{id}`: unknown variant kind {kind}")))?;
        let sent_count = r.u32("sentence count")? as usize;
        if sent_count == 0 {
            return Err(CliError::Corrupt(format!("`{id}` has zero sentences")));
        }
        let n = sent_count
            .checked_mul(dim)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| CliError::Corrupt(format!("`{id}`: payload size overflows")))?;
        let start = r.pos;
        let raw = r.take(n, "embeddings")?;
        let mut values = Vec::with_capacity(sent_count * dim);
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(CliError::InvalidValue { offset: start + 4 * i });
            }
            values.push(v);
        }
        let doc = EmbeddedDoc::new(id, label, domain_id, group_id, variant_kind, sent_count, values)?;
        corpus.docs.push(doc);
    }
    if r.pos != bytes.len() {
        return Err(CliError::Corrupt(format!(
            "{} trailing bytes after the last document",
            bytes.len() - r.pos
        )));
    }
    corpus
        .validate()
        .map_err(|e| CliError::Corrupt(e.to_string()))?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_doc() -> Corpus {
        let mut c = Corpus::new(2);
        c.domain_names.insert(0, "finance".into());
        c.docs.push(
            EmbeddedDoc::new("d0", Label::Machine, 0, 7, VariantKind::Original, 1, vec![1.0, -2.5]).unwrap(),
        );
        c
    }

    #[test]
    fn hand_assembled_bytes() {
        // produced by tests/oracles/seb_bytes.py in the core crate
        let want = "53454231010000000200000001000000200000007b22646f6d61696e5f6e616d6573223a7b2230223a2266696e616e6365227d7d02000000643001000000000700000000000000010000000000803f000020c0";
        let got: String = encode(&one_doc()).unwrap().iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(got, want);
        let bytes: Vec<u8> = (0..want.len()).step_by(2).map(|i| u8::from_str_radix(&want[i..i + 2], 16).unwrap()).collect();
        assert_eq!(decode(&bytes).unwrap(), one_doc());
    }

    #[test]
    fn empty_corpus_size() {
        let c = Corpus::new(768);
        let bytes = encode(&c).unwrap();
        let manifest = br#"{"domain_names":{}}"#;
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 4 + manifest.len());
        assert_eq!(decode(&bytes).unwrap(), c);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode(&one_doc()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(CliError::NotSeb)));
        assert!(matches!(decode(b"SE"), Err(CliError::NotSeb)));
    }

    #[test]
    fn truncation_is_corrupt_everywhere() {
        let bytes = encode(&one_doc()).unwrap();
        for cut in 4..bytes.len() {
            assert!(matches!(decode(&bytes[..cut]), Err(CliError::Corrupt(_))), "cut at {cut}");
        }
    }

    #[test]
    fn nan_payload_reports_offset() {
        let mut bytes = encode(&one_doc()).unwrap();
        let at = bytes.len() - 4;
        bytes[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(CliError::InvalidValue { offset }) if offset == at));
    }

    #[test]
    fn bad_label_is_corrupt() {
        let mut bytes = encode(&one_doc()).unwrap();
        let label_at = 4 + 16 + 32 + 4 + 2;
        bytes[label_at] = 2;
        assert!(matches!(decode(&bytes), Err(CliError::Corrupt(_))));
    }
}
