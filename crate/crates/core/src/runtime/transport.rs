//! In-process message transport between the two nodes, with injectable
//! faults and a hex transcript of every envelope sent.

use std::collections::VecDeque;
use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::crypto::{PkePublicKey, SymCiphertext};
use crate::enclave::delegatee::{DelegateeInitOutput, ProvisionMessage};
use crate::enclave::{SessionId, Transaction};
use crate::hw::Quote;

/// Protocol step an envelope belongs to, in flow order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Delegatee → owner: `(sid, pk_D, vk_sign)`.
    Setup1,
    /// Owner → delegatee: owner quote and `pk_O`.
    Setup2,
    /// Delegatee → owner: `(sid, ct_r, σ_r)`.
    Setup3,
    /// Owner → delegatee: `seq ‖ ct_tx`.
    Delegate,
    /// Delegatee → chain: the decrypted transaction.
    Spend,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::Setup1, Phase::Setup2, Phase::Setup3, Phase::Delegate, Phase::Spend];

    pub fn label(self) -> &'static str {
        match self {
            Phase::Setup1 => "setup1",
            Phase::Setup2 => "setup2",
            Phase::Setup3 => "setup3",
            Phase::Delegate => "delegate",
            Phase::Spend => "spend",
        }
    }

    fn code(self) -> u8 {
        self as u8 + 1
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.code() == c)
    }

    fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.label() == s)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub phase: Phase,
    pub session: SessionId,
    pub body: Vec<u8>,
}

impl Envelope {
    pub fn new(phase: Phase, session: SessionId, body: Vec<u8>) -> Self {
        Self { phase, session, body }
    }

    pub fn encode(&self) -> Vec<u8> {
        Encoder::with_opcode(self.phase.code())
            .put(&self.session.0)
            .put(&self.body)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let (&code, rest) = bytes.split_first().ok_or(CodecError::Truncated)?;
        let phase = Phase::from_code(code).ok_or(CodecError::Invalid("phase"))?;
        let mut d = Decoder::new(rest);
        let env = Self {
            phase,
            session: SessionId(d.take_array()?),
            body: d.take()?.to_vec(),
        };
        d.finish()?;
        Ok(env)
    }

    /// Checks that the body parses under this phase's schema.
    pub fn validate(&self) -> Result<(), CodecError> {
        match self.phase {
            Phase::Setup1 => DelegateeInitOutput::decode(&self.body).map(drop),
            Phase::Setup2 => setup2_decode(&self.body).map(drop),
            Phase::Setup3 => ProvisionMessage::decode(&self.body).map(drop),
            Phase::Delegate => delegate_decode(&self.body).map(drop),
            Phase::Spend => Transaction::from_bytes(&self.body).map(drop),
        }
    }
}

pub fn setup2_encode(quote: &Quote, pk_o: &PkePublicKey) -> Vec<u8> {
    Encoder::new().put(&quote.to_bytes()).put(pk_o.as_bytes()).finish()
}

pub fn setup2_decode(body: &[u8]) -> Result<(Quote, PkePublicKey), CodecError> {
    let mut d = Decoder::new(body);
    let quote = Quote::from_bytes(d.take()?)?;
    let pk = PkePublicKey::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("pk_O"))?;
    d.finish()?;
    Ok((quote, pk))
}

pub fn delegate_encode(seq: u64, ct_tx: &SymCiphertext) -> Vec<u8> {
    Encoder::new().put_u64(seq).put(&ct_tx.to_bytes()).finish()
}

pub fn delegate_decode(body: &[u8]) -> Result<(u64, SymCiphertext), CodecError> {
    let mut d = Decoder::new(body);
    let seq = d.take_u64()?;
    let ct = SymCiphertext::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("ct_tx"))?;
    d.finish()?;
    Ok((seq, ct))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    OwnerToDelegatee,
    DelegateeToOwner,
}

impl Direction {
    fn index(self) -> usize {
        self as usize
    }
}

/// Per-message fault probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkFaults {
    pub drop: f64,
    pub duplicate: f64,
    pub reorder: f64,
    pub corrupt: f64,
}

impl LinkFaults {
    pub fn is_clean(&self) -> bool {
        self.drop == 0.0 && self.duplicate == 0.0 && self.reorder == 0.0 && self.corrupt == 0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub sent: u64,
    pub dropped: u64,
    pub duplicated: u64,
    pub reordered: u64,
    pub corrupted: u64,
}

pub type Interceptor = Box<dyn FnMut(Direction, Envelope) -> Vec<Envelope> + Send>;

/// Two FIFO queues, one per direction. Faults are drawn from a seeded
/// generator so a run replays exactly.
pub struct Link {
    queues: [VecDeque<Vec<u8>>; 2],
    faults: LinkFaults,
    rng: ChaCha20Rng,
    intercept: Option<Interceptor>,
    stats: LinkStats,
}

impl fmt::Debug for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Link")
            .field("faults", &self.faults)
            .field("stats", &self.stats)
            .field("intercept", &self.intercept.is_some())
            .finish()
    }
}

impl Link {
    pub fn new(faults: LinkFaults, seed: u64) -> Self {
        Self {
            queues: Default::default(),
            faults,
            rng: ChaCha20Rng::seed_from_u64(seed),
            intercept: None,
            stats: LinkStats::default(),
        }
    }

    /// Installs a man-in-the-middle that may rewrite, drop or inject
    /// envelopes before faults apply.
    pub fn set_interceptor(&mut self, f: Interceptor) {
        self.intercept = Some(f);
    }

    pub fn clear_interceptor(&mut self) {
        self.intercept = None;
    }

    pub fn faults(&self) -> LinkFaults {
        self.faults
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    fn roll(&mut self, p: f64) -> bool {
        p > 0.0 && (self.rng.next_u64() as f64 / u64::MAX as f64) < p
    }

    pub fn send(&mut self, dir: Direction, env: Envelope) {
        let envs = match self.intercept.as_mut() {
            Some(f) => f(dir, env),
            None => vec![env],
        };
        for env in envs {
            self.stats.sent += 1;
            if self.roll(self.faults.drop) {
                self.stats.dropped += 1;
                continue;
            }
            let mut bytes = env.encode();
            if self.roll(self.faults.corrupt) {
                let bit = (self.rng.next_u64() % (bytes.len() as u64 * 8)) as usize;
                bytes[bit / 8] ^= 1 << (bit % 8);
                self.stats.corrupted += 1;
            }
            let dup = self.roll(self.faults.duplicate);
            let reorder = self.roll(self.faults.reorder);
            let q = &mut self.queues[dir.index()];
            q.push_back(bytes.clone());
            if dup {
                q.push_back(bytes);
                self.stats.duplicated += 1;
            }
            if reorder && q.len() >= 2 {
                let n = q.len();
                q.swap(n - 1, n - 2);
                self.stats.reordered += 1;
            }
        }
    }

    pub fn recv(&mut self, dir: Direction) -> Option<Vec<u8>> {
        self.queues[dir.index()].pop_front()
    }

    pub fn pending(&self, dir: Direction) -> usize {
        self.queues[dir.index()].len()
    }
}

/// One line per envelope, `<phase> <hex(envelope)>`. Lines starting with
/// `#` are annotations and ignored by the flow checker.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    lines: Vec<String>,
}

impl Transcript {
    pub fn record(&mut self, env: &Envelope) {
        self.lines.push(format!("{} {}", env.phase, hex::encode(env.encode())));
    }

    pub fn note(&mut self, text: impl AsRef<str>) {
        self.lines.push(format!("# {}", text.as_ref()));
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }

    pub fn envelopes(&self) -> Result<Vec<Envelope>, FlowError> {
        parse_transcript(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("message {index}: expected {expected}, found {found}")]
    OutOfOrder {
        index: usize,
        expected: &'static str,
        found: Phase,
    },
    #[error("message {index}: session differs from the setup session")]
    SessionChanged { index: usize },
    #[error("transcript ends before {0}")]
    Incomplete(&'static str),
}

pub fn parse_transcript(text: &str) -> Result<Vec<Envelope>, FlowError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| FlowError::Malformed { line: i + 1, reason };
        let (label, hex_body) = line
            .split_once(' ')
            .ok_or_else(|| malformed("missing separator".into()))?;
        let phase = Phase::from_label(label).ok_or_else(|| malformed(format!("unknown phase {label:?}")))?;
        let bytes = hex::decode(hex_body).map_err(|e| malformed(e.to_string()))?;
        let env = Envelope::decode(&bytes).map_err(|e| malformed(e.to_string()))?;
        if env.phase != phase {
            return Err(malformed("label does not match envelope phase".into()));
        }
        env.validate().map_err(|e| malformed(format!("{phase} body: {e}")))?;
        out.push(env);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowSummary {
    pub session: SessionId,
    pub delegations: usize,
    pub spends: usize,
}

/// Checks an honest run: `vk_sign → quote → (sid, ct_r, σ_r)` once, then
/// one or more `ct_tx → Tx` pairs, all under one session.
pub fn check_flow(envs: &[Envelope]) -> Result<FlowSummary, FlowError> {
    const SETUP: [(Phase, &str); 3] = [
        (Phase::Setup1, "setup1 (vk_sign)"),
        (Phase::Setup2, "setup2 (quote)"),
        (Phase::Setup3, "setup3 (sid, ct_r, sigma_r)"),
    ];
    let mut it = envs.iter().enumerate();
    let mut session = None;
    for (phase, name) in SETUP {
        let (i, env) = it.next().ok_or(FlowError::Incomplete(name))?;
        if env.phase != phase {
            return Err(FlowError::OutOfOrder {
                index: i,
                expected: name,
                found: env.phase,
            });
        }
        match session {
            None => session = Some(env.session),
            Some(s) if s != env.session => return Err(FlowError::SessionChanged { index: i }),
            Some(_) => {}
        }
    }
    let session = session.expect("setup has three messages");
    let mut summary = FlowSummary {
        session,
        delegations: 0,
        spends: 0,
    };
    while let Some((i, env)) = it.next() {
        if env.phase != Phase::Delegate {
            return Err(FlowError::OutOfOrder {
                index: i,
                expected: "delegate (ct_tx)",
                found: env.phase,
            });
        }
        if env.session != session {
            return Err(FlowError::SessionChanged { index: i });
        }
        summary.delegations += 1;
        let (i, env) = it.next().ok_or(FlowError::Incomplete("spend (Tx)"))?;
        if env.phase != Phase::Spend {
            return Err(FlowError::OutOfOrder {
                index: i,
                expected: "spend (Tx)",
                found: env.phase,
            });
        }
        if env.session != session {
            return Err(FlowError::SessionChanged { index: i });
        }
        summary.spends += 1;
    }
    if summary.delegations == 0 {
        return Err(FlowError::Incomplete("delegate (ct_tx)"));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(phase: Phase, n: u8) -> Envelope {
        Envelope::new(phase, SessionId([n; 16]), vec![n; 3])
    }

    #[test]
    fn envelope_round_trip() {
        for p in Phase::ALL {
            let e = env(p, 4);
            assert_eq!(Envelope::decode(&e.encode()).unwrap(), e);
        }
        assert!(Envelope::decode(&[0]).is_err());
        assert!(Envelope::decode(&[]).is_err());
    }

    #[test]
    fn clean_link_is_fifo() {
        let mut link = Link::new(LinkFaults::default(), 1);
        for n in 0..5 {
            link.send(Direction::OwnerToDelegatee, env(Phase::Delegate, n));
        }
        for n in 0..5 {
            let got = Envelope::decode(&link.recv(Direction::OwnerToDelegatee).unwrap()).unwrap();
            assert_eq!(got, env(Phase::Delegate, n));
        }
        assert!(link.recv(Direction::OwnerToDelegatee).is_none());
        assert!(link.recv(Direction::DelegateeToOwner).is_none());
    }

    #[test]
    fn faults_are_seeded() {
        let faults = LinkFaults {
            drop: 0.2,
            duplicate: 0.2,
            reorder: 0.2,
            corrupt: 0.2,
        };
        let run = |seed| {
            let mut link = Link::new(faults, seed);
            for n in 0..200 {
                link.send(Direction::DelegateeToOwner, env(Phase::Setup1, n as u8));
            }
            let mut got = Vec::new();
            while let Some(b) = link.recv(Direction::DelegateeToOwner) {
                got.push(b);
            }
            (got, link.stats())
        };
        let (a, sa) = run(7);
        assert_eq!(run(7), (a.clone(), sa));
        assert!(sa.dropped > 0 && sa.duplicated > 0 && sa.reordered > 0 && sa.corrupted > 0);
        assert_ne!(run(8).0, a);
    }

    #[test]
    fn interceptor_can_drop_and_inject() {
        let mut link = Link::new(LinkFaults::default(), 1);
        link.set_interceptor(Box::new(|_, e| vec![e.clone(), e]));
        link.send(Direction::OwnerToDelegatee, env(Phase::Delegate, 1));
        assert_eq!(link.pending(Direction::OwnerToDelegatee), 2);
        link.set_interceptor(Box::new(|_, _| Vec::new()));
        link.send(Direction::OwnerToDelegatee, env(Phase::Delegate, 1));
        assert_eq!(link.pending(Direction::OwnerToDelegatee), 2);
    }

    #[test]
    fn checker_rejects_bad_order() {
        let s = |p| env(p, 1);
        let good = [Phase::Setup1, Phase::Setup2, Phase::Setup3, Phase::Delegate, Phase::Spend].map(s);
        let summary = check_flow(&good).unwrap();
        assert_eq!((summary.delegations, summary.spends), (1, 1));

        let swapped = [Phase::Setup2, Phase::Setup1, Phase::Setup3, Phase::Delegate, Phase::Spend].map(s);
        assert!(matches!(check_flow(&swapped), Err(FlowError::OutOfOrder { index: 0, .. })));
        assert!(matches!(check_flow(&good[..4]), Err(FlowError::Incomplete(_))));
        assert!(matches!(check_flow(&good[..3]), Err(FlowError::Incomplete(_))));

        let mut other = good.clone();
        other[3].session = SessionId([9; 16]);
        assert_eq!(check_flow(&other), Err(FlowError::SessionChanged { index: 3 }));
    }

    #[test]
    fn transcript_parse_skips_notes_and_checks_labels() {
        let e = Envelope::new(Phase::Spend, SessionId([1; 16]), vec![1, 2, 3]);
        let text = format!("# hello\nsetup1 {}\n", hex::encode(e.encode()));
        assert!(matches!(parse_transcript(&text), Err(FlowError::Malformed { line: 2, .. })));
        let text = format!("spend {}\n", hex::encode(e.encode()));
        // body is not a transaction
        assert!(matches!(parse_transcript(&text), Err(FlowError::Malformed { line: 1, .. })));
    }
}
