//! Community support services: certificate authority, naming secretary and
//! controller pool.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use hmac::{Hmac, KeyInit, Mac};
use sha2::{Digest, Sha256};

use crate::controller::{CertificateBlacklist, Controller, DomainPolicy};
use crate::term::Term;

type HmacSha256 = Hmac<Sha256>;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SupportError {
    #[error("a certificate needs at least one attribute")]
    EmptyAttributes,
    #[error("agent `{0}` is not registered or no longer live")]
    NotFound(AgentName),
    #[error("controller pool exhausted (capacity {capacity})")]
    PoolExhausted { capacity: usize },
    #[error("agent name must not be empty")]
    EmptyName,
}

/// A member name issued by the secretary.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentName(String);

impl AgentName {
    pub fn new(name: impl Into<String>) -> AgentName {
        AgentName(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn to_term(&self) -> Term {
        Term::atom(self.0.clone())
    }

    pub fn from_term(t: &Term) -> Option<AgentName> {
        t.as_atom().map(AgentName::new)
    }
}

impl fmt::Display for AgentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentName {
    fn from(s: &str) -> AgentName {
        AgentName::new(s)
    }
}

impl From<AgentName> for Term {
    fn from(a: AgentName) -> Term {
        a.to_term()
    }
}

impl From<&AgentName> for Term {
    fn from(a: &AgentName) -> Term {
        a.to_term()
    }
}

/// SHA-256 digest of a certificate's canonical content.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Fingerprint> {
        Some(Fingerprint(hex::decode(s).ok()?.try_into().ok()?))
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &self.to_hex()[..12])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub issuer: String,
    pub subject: String,
    /// Sorted and deduplicated.
    pub attributes: Vec<Term>,
    pub signature: [u8; 32],
}

impl Certificate {
    /// `cert(issuer(I), subj(S), attr([...]))`: what the law sees and what
    /// the signature and fingerprint cover.
    pub fn content_term(&self) -> Term {
        Term::app(
            "cert",
            vec![
                Term::app("issuer", vec![Term::atom(self.issuer.clone())]),
                Term::app("subj", vec![Term::atom(self.subject.clone())]),
                Term::app("attr", vec![Term::list(self.attributes.clone())]),
            ],
        )
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint(Sha256::digest(self.content_term().to_string().as_bytes()).into())
    }
}

/// Issues and verifies certificates with a keyed MAC. Controllers share the
/// key through configuration.
#[derive(Clone)]
pub struct CertificateAuthority {
    name: String,
    key: Vec<u8>,
}

impl fmt::Debug for CertificateAuthority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CertificateAuthority")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl CertificateAuthority {
    pub fn new(name: impl Into<String>, key: impl Into<Vec<u8>>) -> Self {
        CertificateAuthority {
            name: name.into(),
            key: key.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn mac(&self, content: &Term) -> HmacSha256 {
        let mut mac = <HmacSha256 as KeyInit>::new_from_slice(&self.key).expect("HMAC accepts any key length");
        mac.update(content.to_string().as_bytes());
        mac
    }

    pub fn issue(
        &self,
        subject: impl Into<String>,
        attrs: impl IntoIterator<Item = Term>,
    ) -> Result<Certificate, SupportError> {
        let attributes: BTreeSet<Term> = attrs.into_iter().collect();
        if attributes.is_empty() {
            return Err(SupportError::EmptyAttributes);
        }
        let mut cert = Certificate {
            issuer: self.name.clone(),
            subject: subject.into(),
            attributes: attributes.into_iter().collect(),
            signature: [0; 32],
        };
        cert.signature = self.mac(&cert.content_term()).finalize().into_bytes().into();
        Ok(cert)
    }

    pub fn verify(&self, cert: &Certificate) -> bool {
        cert.issuer == self.name && self.mac(&cert.content_term()).verify_slice(&cert.signature).is_ok()
    }
}

/// Controller identifier inside the simulated controller service.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ControllerId(pub u32);

impl fmt::Display for ControllerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// The secretary: hands out unique names and locates live agents.
#[derive(Clone, Debug, Default)]
pub struct NameRegistry {
    entries: BTreeMap<AgentName, ControllerId>,
    live: BTreeMap<AgentName, bool>,
    issued: BTreeSet<AgentName>,
}

impl NameRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The name `requested` would receive: itself if never issued, else the
    /// first free `requested-N` for N = 2, 3, ...
    pub fn propose(&self, requested: &str) -> Result<AgentName, SupportError> {
        if requested.is_empty() {
            return Err(SupportError::EmptyName);
        }
        let plain = AgentName::new(requested);
        if !self.issued.contains(&plain) {
            return Ok(plain);
        }
        (2u64..)
            .map(|n| AgentName::new(format!("{requested}-{n}")))
            .find(|n| !self.issued.contains(n))
            .ok_or(SupportError::EmptyName)
    }

    /// Reserves and returns a unique name; it starts out not live.
    pub fn register_name(&mut self, requested: &str) -> Result<AgentName, SupportError> {
        let name = self.propose(requested)?;
        self.issued.insert(name.clone());
        Ok(name)
    }

    /// Binds an issued name to its controller and marks it live.
    pub fn bind(&mut self, name: &AgentName, locator: ControllerId) {
        self.issued.insert(name.clone());
        self.entries.insert(name.clone(), locator);
        self.live.insert(name.clone(), true);
    }

    pub fn resolve(&self, name: &AgentName) -> Result<ControllerId, SupportError> {
        match (self.entries.get(name), self.live.get(name)) {
            (Some(id), Some(true)) => Ok(*id),
            _ => Err(SupportError::NotFound(name.clone())),
        }
    }

    pub fn deregister(&mut self, name: &AgentName) {
        if let Some(l) = self.live.get_mut(name) {
            *l = false;
        }
    }

    pub fn is_live(&self, name: &AgentName) -> bool {
        self.live.get(name).copied().unwrap_or(false)
    }

    pub fn live(&self) -> impl Iterator<Item = (&AgentName, ControllerId)> {
        self.entries
            .iter()
            .filter(|(n, _)| self.is_live(n))
            .map(|(n, id)| (n, *id))
    }

    /// One `name locator live|dead` line per bound name.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (name, id) in &self.entries {
            let state = if self.is_live(name) { "live" } else { "dead" };
            out.push_str(&format!("{name} {id} {state}\n"));
        }
        out
    }
}

/// Settings every controller of a community is built with.
#[derive(Clone, Debug)]
pub struct ControllerConfig {
    pub ca: Arc<CertificateAuthority>,
    pub domain: DomainPolicy,
}

/// Hands out fresh, law-less controllers up to a fixed capacity. New
/// controllers start with every fingerprint blacklisted so far.
#[derive(Clone, Debug)]
pub struct ControllerPool {
    capacity: usize,
    next: u32,
    allocated: BTreeSet<ControllerId>,
    config: ControllerConfig,
    blacklist: CertificateBlacklist,
}

impl ControllerPool {
    /// `first_id` lets several pools share one id space.
    pub fn new(capacity: usize, first_id: u32, config: ControllerConfig) -> Self {
        ControllerPool {
            capacity,
            next: first_id,
            allocated: BTreeSet::new(),
            config,
            blacklist: CertificateBlacklist::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn allocated(&self) -> &BTreeSet<ControllerId> {
        &self.allocated
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn allocate_controller(&mut self) -> Result<Controller, SupportError> {
        if self.allocated.len() >= self.capacity {
            return Err(SupportError::PoolExhausted {
                capacity: self.capacity,
            });
        }
        let id = ControllerId(self.next);
        self.next += 1;
        self.allocated.insert(id);
        Ok(Controller::new(id, self.config.clone(), self.blacklist.clone()))
    }

    pub fn release(&mut self, id: ControllerId) {
        self.allocated.remove(&id);
    }

    pub fn note_blacklisted(&mut self, fp: Fingerprint) {
        self.blacklist.insert(fp);
    }

    pub fn blacklist(&self) -> &CertificateBlacklist {
        &self.blacklist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Term {
        Term::parse(s).unwrap()
    }

    fn ca() -> CertificateAuthority {
        CertificateAuthority::new("ca", b"enterprise-key".to_vec())
    }

    #[test]
    fn issued_certificate_verifies() {
        let c = ca().issue("alice", [t("role(manager)")]).unwrap();
        assert!(ca().verify(&c));
        assert_eq!(
            c.content_term().to_string(),
            "cert(issuer(ca), subj(alice), attr([role(manager)]))"
        );
    }

    #[test]
    fn tampered_attribute_fails_verification() {
        let mut c = ca().issue("alice", [t("role(staff)")]).unwrap();
        c.attributes[0] = t("role(manager)");
        assert!(!ca().verify(&c));
    }

    #[test]
    fn other_key_does_not_verify() {
        let c = ca().issue("alice", [t("role(staff)")]).unwrap();
        assert!(!CertificateAuthority::new("ca", b"other".to_vec()).verify(&c));
    }

    #[test]
    fn fingerprint_is_the_digest_of_the_content_text() {
        let a = ca().issue("alice", [t("b(1)"), t("a(2)")]).unwrap();
        let b = ca().issue("alice", [t("a(2)"), t("b(1)")]).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let expect: [u8; 32] = Sha256::digest(b"cert(issuer(ca), subj(alice), attr([a(2), b(1)]))").into();
        assert_eq!(a.fingerprint().0, expect);
    }

    #[test]
    fn empty_attribute_set_is_rejected() {
        assert_eq!(ca().issue("x", []), Err(SupportError::EmptyAttributes));
    }

    #[test]
    fn colliding_names_are_suffixed() {
        let mut r = NameRegistry::new();
        assert_eq!(r.register_name("alice").unwrap().as_str(), "alice");
        assert_eq!(r.register_name("alice").unwrap().as_str(), "alice-2");
        assert_eq!(r.register_name("alice").unwrap().as_str(), "alice-3");
    }

    #[test]
    fn resolve_follows_liveness() {
        let mut r = NameRegistry::new();
        let a = r.register_name("alice").unwrap();
        assert!(r.resolve(&a).is_err());
        r.bind(&a, ControllerId(7));
        assert_eq!(r.resolve(&a), Ok(ControllerId(7)));
        assert!(r.resolve(&"bob".into()).is_err());
        r.deregister(&a);
        assert_eq!(r.resolve(&a), Err(SupportError::NotFound(a.clone())));
        // never handed out again
        assert_eq!(r.register_name("alice").unwrap().as_str(), "alice-2");
    }

    fn pool(capacity: usize) -> ControllerPool {
        ControllerPool::new(
            capacity,
            0,
            ControllerConfig {
                ca: Arc::new(ca()),
                domain: DomainPolicy::default(),
            },
        )
    }

    #[test]
    fn pool_capacity_is_enforced() {
        let mut p = pool(2);
        let a = p.allocate_controller().unwrap();
        let b = p.allocate_controller().unwrap();
        assert_ne!(a.id(), b.id());
        assert_eq!(
            p.allocate_controller().unwrap_err(),
            SupportError::PoolExhausted { capacity: 2 }
        );
        p.release(a.id());
        assert!(p.allocate_controller().is_ok());
    }

    #[test]
    fn scale_allocation_succeeds() {
        let mut p = pool(256);
        for _ in 0..200 {
            let c = p.allocate_controller().unwrap();
            assert!(c.law().is_none());
            assert!(c.state().is_empty());
        }
        assert_eq!(p.allocated().len(), 200);
    }
}
