//! Envelope serialization.
//!
//! An envelope is written as one canonical term
//!
//! ```text
//! envelope(src(S), dst(D), law("<64 hex digits>"), msg(M))
//! envelope(src(S), dst(D), law("<64 hex digits>"), msg(M), profile([A, ...]))
//! ```
//!
//! and framed as a big-endian `u32` byte length followed by that many bytes
//! of UTF-8 text.

use std::io::{self, Read, Write};

use crate::law::LawHash;
use crate::support::AgentName;
use crate::term::{Term, DEFAULT_MAX_DEPTH};

/// Largest accepted frame body.
pub const MAX_FRAME: usize = 1 << 20;

/// Nesting allowed when reading an envelope: the message itself may use the
/// full term depth under the `envelope(msg(..))` wrapper.
pub const ENVELOPE_DEPTH: usize = DEFAULT_MAX_DEPTH + 2;

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("frame is not UTF-8")]
    NotUtf8,
    #[error("malformed envelope text: {0}")]
    Syntax(#[from] crate::syntax::SyntaxError),
    #[error("malformed envelope: {0}")]
    Shape(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub src: AgentName,
    pub dst: AgentName,
    pub msg: Term,
    pub law_hash: LawHash,
    /// Sender's profile, present only when the sender's law attached it.
    pub profile: Option<Vec<Term>>,
}

impl Envelope {
    /// The payload the receiving law sees: `profiled(M, Profile)` when a
    /// profile is attached, else `M`.
    pub fn payload(&self) -> Term {
        match &self.profile {
            Some(p) => Term::app("profiled", vec![self.msg.clone(), Term::list(p.clone())]),
            None => self.msg.clone(),
        }
    }

    pub fn to_term(&self) -> Term {
        let mut args = vec![
            Term::app("src", vec![self.src.to_term()]),
            Term::app("dst", vec![self.dst.to_term()]),
            Term::app("law", vec![Term::str(self.law_hash.to_hex())]),
            Term::app("msg", vec![self.msg.clone()]),
        ];
        if let Some(p) = &self.profile {
            args.push(Term::app("profile", vec![Term::list(p.clone())]));
        }
        Term::app("envelope", args)
    }

    pub fn from_term(t: &Term) -> Result<Envelope, WireError> {
        let shape = |m: &str| WireError::Shape(m.to_string());
        if t.functor() != Some("envelope") || !(4..=5).contains(&t.arity()) {
            return Err(shape("expected envelope/4 or envelope/5"));
        }
        let field = |i: usize, name: &str| -> Result<&Term, WireError> {
            let f = &t.args()[i];
            if f.is(name, 1) {
                Ok(&f.args()[0])
            } else {
                Err(WireError::Shape(format!("field {} should be {name}(..)", i + 1)))
            }
        };
        let src = AgentName::from_term(field(0, "src")?).ok_or_else(|| shape("src is not a name"))?;
        let dst = AgentName::from_term(field(1, "dst")?).ok_or_else(|| shape("dst is not a name"))?;
        let law_hash = field(2, "law")?
            .as_str()
            .and_then(LawHash::from_hex)
            .ok_or_else(|| shape("law hash is not 64 hex digits"))?;
        let msg = field(3, "msg")?.clone();
        if !msg.is_ground() {
            return Err(shape("message contains variables"));
        }
        let profile = if t.arity() == 5 {
            let items = field(4, "profile")?
                .as_list()
                .ok_or_else(|| shape("profile is not a list"))?;
            Some(items.to_vec())
        } else {
            None
        };
        Ok(Envelope {
            src,
            dst,
            msg,
            law_hash,
            profile,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let body = self.to_term().to_string().into_bytes();
        let mut out = Vec::with_capacity(4 + body.len());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Decodes exactly one frame.
    pub fn decode(frame: &[u8]) -> Result<Envelope, WireError> {
        if frame.len() < 4 {
            return Err(WireError::Shape("frame shorter than its length prefix".into()));
        }
        let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
        if len > MAX_FRAME {
            return Err(WireError::TooLarge(len));
        }
        if frame.len() != 4 + len {
            return Err(WireError::Shape(format!(
                "length prefix says {len} bytes, frame carries {}",
                frame.len() - 4
            )));
        }
        Envelope::decode_body(&frame[4..])
    }

    fn decode_body(body: &[u8]) -> Result<Envelope, WireError> {
        let text = std::str::from_utf8(body).map_err(|_| WireError::NotUtf8)?;
        Envelope::from_term(&Term::parse_with_depth(text, ENVELOPE_DEPTH)?)
    }
}

pub fn write_frame(w: &mut impl Write, env: &Envelope) -> Result<(), WireError> {
    w.write_all(&env.encode())?;
    w.flush()?;
    Ok(())
}

/// Reads one frame and returns its raw bytes, prefix included.
pub fn read_frame(r: &mut impl Read) -> Result<Vec<u8>, WireError> {
    let mut prefix = [0u8; 4];
    r.read_exact(&mut prefix)?;
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME {
        return Err(WireError::TooLarge(len));
    }
    let mut frame = vec![0u8; 4 + len];
    frame[..4].copy_from_slice(&prefix);
    r.read_exact(&mut frame[4..])?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(profile: Option<Vec<Term>>) -> Envelope {
        Envelope {
            src: "alice".into(),
            dst: "bob-2".into(),
            msg: Term::parse("dm(#chat#, \"hi \\\"there\\\"\")").unwrap(),
            law_hash: LawHash::of("law x;\n"),
            profile,
        }
    }

    #[test]
    fn text_form_is_canonical() {
        let e = env(None);
        assert_eq!(
            e.to_term().to_string(),
            format!(
                "envelope(src(alice), dst('bob-2'), law(\"{}\"), msg(dm(#chat#, \"hi \\\"there\\\"\")))",
                e.law_hash.to_hex()
            )
        );
    }

    #[test]
    fn frames_round_trip() {
        for e in [env(None), env(Some(vec![Term::parse("group(t1)").unwrap()]))] {
            let bytes = e.encode();
            assert_eq!(&bytes[..4], &((bytes.len() - 4) as u32).to_be_bytes());
            assert_eq!(Envelope::decode(&bytes).unwrap(), e);
            let mut cursor = io::Cursor::new(bytes.clone());
            assert_eq!(read_frame(&mut cursor).unwrap(), bytes);
        }
    }

    #[test]
    fn truncated_and_garbled_frames_are_rejected() {
        let bytes = env(None).encode();
        assert!(Envelope::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[10] = b'(';
        assert!(Envelope::decode(&bad).is_err());
        let mut huge = bytes;
        huge[..4].copy_from_slice(&(u32::MAX).to_be_bytes());
        assert!(matches!(Envelope::decode(&huge), Err(WireError::TooLarge(_))));
    }

    #[test]
    fn payload_wraps_attached_profile() {
        let e = env(Some(vec![Term::atom("x")]));
        assert_eq!(e.payload().functor(), Some("profiled"));
        assert_eq!(env(None).payload(), env(None).msg);
    }
}
