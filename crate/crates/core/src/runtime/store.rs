//! Append-only store for an owner node's sealed state.
//!
//! Three frame kinds share the log:
//!
//! - `DSEAL1 ‖ addr(25) ‖ seq(8) ‖ len ‖ ct` sealed balance record
//! - `DOUTB1 ‖ seq(8) ‖ len ‖ ct_tx` delegated transaction awaiting delivery
//! - `DSESS1 ‖ len ‖ ct` sealed session keys
//!
//! A delegation writes its outbox frame and then its balance record in one
//! append, synced before `ct_tx` leaves the node. An outbox entry only counts
//! once a record with the same or a higher sequence number follows it, so a
//! torn append releases nothing.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::CodecError;
use crate::crypto::SymCiphertext;
use crate::enclave::{SealedRecord, SEAL_MAGIC};

pub const OUTBOX_MAGIC: &[u8; 6] = b"DOUTB1";
pub const SESSION_MAGIC: &[u8; 6] = b"DSESS1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("seal store I/O: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt seal store at offset {offset}: {cause}")]
    Corrupt { offset: usize, cause: CodecError },
}

/// Everything recoverable from a store.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoreContents {
    pub session: Option<SymCiphertext>,
    pub latest: Option<SealedRecord>,
    /// Delegations whose balance record is durable, keyed by sequence number.
    pub outbox: BTreeMap<u64, SymCiphertext>,
    /// Length of the valid prefix; anything after it is a torn append.
    pub valid_len: usize,
    pub records: usize,
}

#[derive(Debug)]
enum Backend {
    Memory(Vec<u8>),
    File { path: PathBuf, file: File },
}

#[derive(Debug)]
pub struct SealStore {
    backend: Backend,
}

fn outbox_frame(seq: u64, ct_tx: &SymCiphertext) -> Vec<u8> {
    let ct = ct_tx.to_bytes();
    let mut out = Vec::with_capacity(6 + 8 + 4 + ct.len());
    out.extend_from_slice(OUTBOX_MAGIC);
    out.extend_from_slice(&seq.to_le_bytes());
    out.extend_from_slice(&(ct.len() as u32).to_le_bytes());
    out.extend_from_slice(&ct);
    out
}

fn session_frame(blob: &SymCiphertext) -> Vec<u8> {
    let ct = blob.to_bytes();
    let mut out = Vec::with_capacity(6 + 4 + ct.len());
    out.extend_from_slice(SESSION_MAGIC);
    out.extend_from_slice(&(ct.len() as u32).to_le_bytes());
    out.extend_from_slice(&ct);
    out
}

/// Frame for one delegation: outbox entry first, then the balance record.
pub fn delegation_frames(record: &SealedRecord, ct_tx: &SymCiphertext) -> Vec<u8> {
    let mut out = outbox_frame(record.seq, ct_tx);
    out.extend_from_slice(&record.to_frame());
    out
}

enum Frame {
    Record(SealedRecord),
    Outbox(u64, SymCiphertext),
    Session(SymCiphertext),
}

fn take(bytes: &[u8], n: usize) -> Result<(&[u8], &[u8]), CodecError> {
    (bytes.len() >= n).then(|| bytes.split_at(n)).ok_or(CodecError::Truncated)
}

fn length_prefixed(bytes: &[u8]) -> Result<(&[u8], usize), CodecError> {
    let (len, rest) = take(bytes, 4)?;
    let len = u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize;
    let (body, _) = take(rest, len)?;
    Ok((body, 4 + len))
}

fn ciphertext(body: &[u8]) -> Result<SymCiphertext, CodecError> {
    SymCiphertext::from_bytes(body).map_err(|_| CodecError::Invalid("ciphertext"))
}

fn parse_frame(bytes: &[u8]) -> Result<(Frame, usize), CodecError> {
    let (magic, rest) = take(bytes, 6)?;
    if magic == SEAL_MAGIC {
        let (rec, used) = SealedRecord::parse_frame(bytes)?;
        Ok((Frame::Record(rec), used))
    } else if magic == OUTBOX_MAGIC {
        let (seq, rest) = take(rest, 8)?;
        let (body, used) = length_prefixed(rest)?;
        let seq = u64::from_le_bytes(seq.try_into().expect("8 bytes"));
        Ok((Frame::Outbox(seq, ciphertext(body)?), 6 + 8 + used))
    } else if magic == SESSION_MAGIC {
        let (body, used) = length_prefixed(rest)?;
        Ok((Frame::Session(ciphertext(body)?), 6 + used))
    } else {
        Err(CodecError::Invalid("frame magic"))
    }
}

/// Parses a whole log. A truncated final frame is a torn append and is
/// excluded; any other malformation is corruption.
pub fn parse_log(bytes: &[u8]) -> Result<StoreContents, StoreError> {
    let mut out = StoreContents::default();
    let mut staged = BTreeMap::new();
    let mut at = 0;
    while at < bytes.len() {
        match parse_frame(&bytes[at..]) {
            Ok((frame, used)) => {
                match frame {
                    Frame::Record(rec) => {
                        if out.latest.as_ref().is_some_and(|l| rec.seq <= l.seq) {
                            return Err(StoreError::Corrupt {
                                offset: at,
                                cause: CodecError::Invalid("sequence number did not increase"),
                            });
                        }
                        let mut later = staged.split_off(&(rec.seq + 1));
                        out.outbox.append(&mut staged);
                        std::mem::swap(&mut staged, &mut later);
                        out.latest = Some(rec);
                        out.records += 1;
                    }
                    Frame::Outbox(seq, ct) => {
                        staged.insert(seq, ct);
                    }
                    Frame::Session(ct) => out.session = Some(ct),
                }
                at += used;
            }
            Err(CodecError::Truncated) => break,
            Err(cause) => return Err(StoreError::Corrupt { offset: at, cause }),
        }
    }
    out.valid_len = at;
    Ok(out)
}

impl SealStore {
    pub fn memory() -> Self {
        Self {
            backend: Backend::Memory(Vec::new()),
        }
    }

    /// Opens (creating if needed) a store file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        Ok(Self {
            backend: Backend::File { path, file },
        })
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.backend {
            Backend::Memory(_) => None,
            Backend::File { path, .. } => Some(path),
        }
    }

    pub fn bytes(&self) -> Result<Vec<u8>, StoreError> {
        match &self.backend {
            Backend::Memory(b) => Ok(b.clone()),
            Backend::File { file, .. } => {
                let mut f = file.try_clone()?;
                f.seek(SeekFrom::Start(0))?;
                let mut buf = Vec::new();
                f.read_to_end(&mut buf)?;
                Ok(buf)
            }
        }
    }

    pub fn len(&self) -> Result<u64, StoreError> {
        match &self.backend {
            Backend::Memory(b) => Ok(b.len() as u64),
            Backend::File { file, .. } => Ok(file.metadata()?.len()),
        }
    }

    pub fn is_empty(&self) -> Result<bool, StoreError> {
        Ok(self.len()? == 0)
    }

    /// Appends and syncs. Returns only once the bytes are durable.
    fn append(&mut self, bytes: &[u8]) -> Result<(), StoreError> {
        match &mut self.backend {
            Backend::Memory(b) => b.extend_from_slice(bytes),
            Backend::File { file, .. } => {
                file.write_all(bytes)?;
                file.sync_data()?;
            }
        }
        Ok(())
    }

    pub fn append_record(&mut self, record: &SealedRecord) -> Result<(), StoreError> {
        self.append(&record.to_frame())
    }

    pub fn append_session(&mut self, blob: &SymCiphertext) -> Result<(), StoreError> {
        self.append(&session_frame(blob))
    }

    pub fn append_delegation(&mut self, record: &SealedRecord, ct_tx: &SymCiphertext) -> Result<(), StoreError> {
        self.append(&delegation_frames(record, ct_tx))
    }

    /// Simulates a crash part-way through an append: only the first half of
    /// the delegation frames reach the store.
    pub fn append_torn(&mut self, record: &SealedRecord, ct_tx: &SymCiphertext) -> Result<(), StoreError> {
        let frames = delegation_frames(record, ct_tx);
        self.append(&frames[..frames.len() / 2])
    }

    pub fn load(&self) -> Result<StoreContents, StoreError> {
        parse_log(&self.bytes()?)
    }

    /// Loads the store and cuts off a torn tail so later appends start on a
    /// frame boundary.
    pub fn recover(&mut self) -> Result<StoreContents, StoreError> {
        let contents = self.load()?;
        match &mut self.backend {
            Backend::Memory(b) => b.truncate(contents.valid_len),
            Backend::File { file, .. } => {
                if file.metadata()?.len() != contents.valid_len as u64 {
                    file.set_len(contents.valid_len as u64)?;
                    file.sync_all()?;
                }
            }
        }
        Ok(contents)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{derive_address, se_enc, se_kgen, sig_keygen, Address};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn fixtures() -> (ChaCha20Rng, Address) {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let addr = derive_address(&sig_keygen(&mut rng).vk);
        (rng, addr)
    }

    fn record(rng: &mut ChaCha20Rng, addr: Address, seq: u64) -> SealedRecord {
        let k = se_kgen(rng);
        SealedRecord {
            addr,
            seq,
            c_update: se_enc(rng, &k, &seq.to_le_bytes()),
        }
    }

    fn ct(rng: &mut ChaCha20Rng, tag: u8) -> SymCiphertext {
        let k = se_kgen(rng);
        se_enc(rng, &k, &[tag; 163])
    }

    #[test]
    fn empty_store_loads_empty() {
        let s = SealStore::memory();
        assert_eq!(s.load().unwrap(), StoreContents::default());
    }

    #[test]
    fn latest_record_and_committed_outbox() {
        let (mut rng, addr) = fixtures();
        let mut s = SealStore::memory();
        let session = ct(&mut rng, 9);
        s.append_session(&session).unwrap();
        s.append_record(&record(&mut rng, addr, 1)).unwrap();
        let c2 = ct(&mut rng, 2);
        let r2 = record(&mut rng, addr, 2);
        s.append_delegation(&r2, &c2).unwrap();
        let got = s.load().unwrap();
        assert_eq!(got.session, Some(session));
        assert_eq!(got.latest, Some(r2));
        assert_eq!(got.outbox.into_iter().collect::<Vec<_>>(), vec![(2, c2)]);
        assert_eq!(got.records, 2);
    }

    #[test]
    fn torn_append_releases_nothing_and_is_truncated() {
        let (mut rng, addr) = fixtures();
        let mut s = SealStore::memory();
        let r1 = record(&mut rng, addr, 1);
        s.append_record(&r1).unwrap();
        let before = s.len().unwrap();
        let r2 = record(&mut rng, addr, 2);
        let c2 = ct(&mut rng, 2);
        s.append_torn(&r2, &c2).unwrap();
        let got = s.recover().unwrap();
        assert_eq!(got.latest, Some(r1));
        assert!(got.outbox.is_empty());
        assert_eq!(s.len().unwrap(), before);

        // a retried delegation lands on a clean boundary
        let c2b = ct(&mut rng, 3);
        s.append_delegation(&r2, &c2b).unwrap();
        let got = s.load().unwrap();
        assert_eq!(got.latest, Some(r2));
        assert_eq!(got.outbox.get(&2), Some(&c2b));
    }

    #[test]
    fn every_truncation_point_is_clean() {
        let (mut rng, addr) = fixtures();
        let mut s = SealStore::memory();
        let r1 = record(&mut rng, addr, 1);
        s.append_record(&r1).unwrap();
        let base = s.len().unwrap() as usize;
        let r2 = record(&mut rng, addr, 2);
        let c2 = ct(&mut rng, 2);
        s.append_delegation(&r2, &c2).unwrap();
        let full = s.bytes().unwrap();
        for cut in base..full.len() {
            let got = parse_log(&full[..cut]).unwrap();
            assert_eq!(got.latest.as_ref(), Some(&r1), "cut {cut}");
            assert!(got.outbox.is_empty(), "cut {cut}");
        }
        assert_eq!(parse_log(&full).unwrap().latest, Some(r2));
    }

    #[test]
    fn unknown_magic_is_corruption() {
        let (mut rng, addr) = fixtures();
        let mut bytes = record(&mut rng, addr, 1).to_frame();
        bytes.extend_from_slice(b"XXXXXX and then some");
        assert!(matches!(parse_log(&bytes), Err(StoreError::Corrupt { .. })));
    }

    #[test]
    fn decreasing_sequence_is_corruption() {
        let (mut rng, addr) = fixtures();
        let mut bytes = record(&mut rng, addr, 2).to_frame();
        bytes.extend_from_slice(&record(&mut rng, addr, 1).to_frame());
        assert!(matches!(parse_log(&bytes), Err(StoreError::Corrupt { .. })));
    }

    #[test]
    fn file_backend_matches_memory() {
        let (mut rng, addr) = fixtures();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("owner.seal");
        let mut mem = SealStore::memory();
        {
            let mut file = SealStore::open(&path).unwrap();
            let session = ct(&mut rng, 1);
            let r = record(&mut rng, addr, 1);
            let c = ct(&mut rng, 4);
            for s in [&mut mem, &mut file] {
                s.append_session(&session).unwrap();
                s.append_delegation(&r, &c).unwrap();
            }
            let r2 = record(&mut rng, addr, 2);
            file.append_torn(&r2, &c).unwrap();
        }
        let mut reopened = SealStore::open(&path).unwrap();
        assert_eq!(reopened.recover().unwrap(), mem.load().unwrap());
        assert_eq!(std::fs::read(&path).unwrap(), mem.bytes().unwrap());
    }
}
