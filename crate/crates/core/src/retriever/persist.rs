//! Binary index file.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic  "RNRTFIDF"             8 bytes
//! version                       u32
//! bucket count                  u32
//! N_docs                        u32
//! section: passage ids          u64 byte length, N_docs × u64
//! section: document frequencies u64 byte length, u32 count, count × (bucket u32, df u32)
//! section: postings             u64 byte length, u32 count, count × (bucket u32, n u32, n × (doc u32, tf u32))
//! section: norms                u64 byte length, N_docs × f32
//! ```
//!
//! Buckets appear in ascending order, so saving is deterministic.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::index::{Posting, TfIdfIndex};
use super::IndexError;

pub const INDEX_MAGIC: &[u8; 8] = b"RNRTFIDF";
pub const INDEX_VERSION: u32 = 1;

fn section(out: &mut Vec<u8>, body: &[u8]) {
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(body);
}

impl TfIdfIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buckets: Vec<u32> = self.postings.keys().copied().collect();
        buckets.sort_unstable();

        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&self.buckets.to_le_bytes());
        out.extend_from_slice(&self.n_docs().to_le_bytes());

        let ids: Vec<u8> = self.ids.iter().flat_map(|id| id.to_le_bytes()).collect();
        section(&mut out, &ids);

        let mut df = Vec::with_capacity(4 + buckets.len() * 8);
        df.extend_from_slice(&(buckets.len() as u32).to_le_bytes());
        for b in &buckets {
            df.extend_from_slice(&b.to_le_bytes());
            df.extend_from_slice(&(self.postings[b].len() as u32).to_le_bytes());
        }
        section(&mut out, &df);

        let mut post = Vec::new();
        post.extend_from_slice(&(buckets.len() as u32).to_le_bytes());
        for b in &buckets {
            let list = &self.postings[b];
            post.extend_from_slice(&b.to_le_bytes());
            post.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for p in list {
                post.extend_from_slice(&p.doc.to_le_bytes());
                post.extend_from_slice(&p.tf.to_le_bytes());
            }
        }
        section(&mut out, &post);

        let norms: Vec<u8> = self.norms.iter().flat_map(|n| n.to_le_bytes()).collect();
        section(&mut out, &norms);
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != INDEX_MAGIC {
            return Err(IndexError::Format("not an index file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(IndexError::Version { found: version, expected: INDEX_VERSION });
        }
        let buckets = r.u32()?;
        if buckets == 0 {
            return Err(IndexError::Format("zero buckets".into()));
        }
        let n_docs = r.u32()? as usize;

        let mut s = r.section()?;
        let mut ids = Vec::with_capacity(n_docs);
        let mut by_id = HashMap::with_capacity(n_docs);
        for doc in 0..n_docs {
            let id = s.u64()?;
            if by_id.insert(id, doc as u32).is_some() {
                return Err(IndexError::DuplicateId(id));
            }
            ids.push(id);
        }
        s.finish("passage ids")?;

        let mut s = r.section()?;
        let n = s.u32()? as usize;
        let mut dfs = Vec::with_capacity(n);
        for _ in 0..n {
            dfs.push((s.u32()?, s.u32()?));
        }
        s.finish("document frequencies")?;

        let mut s = r.section()?;
        let n = s.u32()? as usize;
        let mut postings = HashMap::with_capacity(n);
        for _ in 0..n {
            let b = s.u32()?;
            if b >= buckets {
                return Err(IndexError::Format(format!("bucket {b} out of range")));
            }
            let len = s.u32()? as usize;
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let doc = s.u32()?;
                if doc as usize >= n_docs {
                    return Err(IndexError::Format(format!("posting for unknown passage {doc}")));
                }
                list.push(Posting { doc, tf: s.u32()? });
            }
            postings.insert(b, list);
        }
        s.finish("postings")?;
        if dfs.len() != postings.len()
            || dfs
                .iter()
                .any(|(b, df)| postings.get(b).map(|l: &Vec<Posting>| l.len() as u32) != Some(*df))
        {
            return Err(IndexError::Format("document frequencies disagree with postings".into()));
        }

        let mut s = r.section()?;
        let mut norms = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            norms.push(f32::from_le_bytes(s.take(4)?.try_into().unwrap()));
        }
        s.finish("norms")?;
        if r.pos != bytes.len() {
            return Err(IndexError::Format("trailing bytes after norms".into()));
        }
        Ok(TfIdfIndex { buckets, ids, by_id, postings, norms })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| IndexError::Format("truncated index file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn section(&mut self) -> Result<Reader<'a>, IndexError> {
        let len = usize::try_from(self.u64()?).map_err(|_| IndexError::Format("section too large".into()))?;
        Ok(Reader { bytes: self.take(len)?, pos: 0 })
    }

    fn finish(&self, name: &str) -> Result<(), IndexError> {
        if self.pos != self.bytes.len() {
            return Err(IndexError::Format(format!("{name} section has trailing bytes")));
        }
        Ok(())
    }
}
