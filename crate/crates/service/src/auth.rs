use chrono::{DateTime, Duration, Utc};
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

type HmacSha256 = Hmac<Sha256>;

const ACCESS_CODE_BYTES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("malformed token")]
    Malformed,
    #[error("bad token signature")]
    BadSignature,
    #[error("token expired")]
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub token: String,
    pub rater_id: String,
    pub expires_at: DateTime<Utc>,
}

/// Signs session tokens (`hex(rater_id).expiry.signature`) and per-rater
/// access codes with one HMAC-SHA256 key.
#[derive(Clone)]
pub struct SessionKeys {
    secret: Vec<u8>,
    ttl: Duration,
}

impl std::fmt::Debug for SessionKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionKeys").field("ttl", &self.ttl).finish_non_exhaustive()
    }
}

impl SessionKeys {
    pub fn new(secret: impl AsRef<[u8]>, ttl: Duration) -> Self {
        SessionKeys { secret: secret.as_ref().to_vec(), ttl }
    }

    pub fn random(ttl: Duration) -> Self {
        let mut secret = [0u8; 32];
        rand::fill(&mut secret);
        Self::new(secret, ttl)
    }

    fn mac(&self, parts: &[&str]) -> HmacSha256 {
        let mut mac = HmacSha256::new_from_slice(&self.secret).expect("hmac accepts any key length");
        mac.update(parts.join("\u{1f}").as_bytes());
        mac
    }

    /// Code handed to a rater out of band and exchanged for a session.
    pub fn access_code(&self, rater_id: &str) -> String {
        let tag = self.mac(&["access", rater_id]).finalize().into_bytes();
        hex::encode(&tag[..ACCESS_CODE_BYTES])
    }

    pub fn check_access_code(&self, rater_id: &str, code: &str) -> bool {
        match hex::decode(code) {
            Ok(bytes) if bytes.len() == ACCESS_CODE_BYTES => {
                self.mac(&["access", rater_id]).verify_truncated_left(&bytes).is_ok()
            }
            _ => false,
        }
    }

    pub fn issue(&self, rater_id: &str, now: DateTime<Utc>) -> SessionToken {
        self.issue_until(rater_id, now + self.ttl)
    }

    pub fn issue_until(&self, rater_id: &str, expires_at: DateTime<Utc>) -> SessionToken {
        let who = hex::encode(rater_id);
        let expiry = expires_at.timestamp().to_string();
        let sig = hex::encode(self.mac(&["session", &who, &expiry]).finalize().into_bytes());
        SessionToken { token: format!("{who}.{expiry}.{sig}"), rater_id: rater_id.to_string(), expires_at }
    }

    /// The rater id a token was issued to.
    pub fn verify(&self, token: &str, now: DateTime<Utc>) -> Result<String, AuthError> {
        let mut parts = token.split('.');
        let (Some(who), Some(expiry), Some(sig), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(AuthError::Malformed);
        };
        let sig = hex::decode(sig).map_err(|_| AuthError::Malformed)?;
        self.mac(&["session", who, expiry]).verify_slice(&sig).map_err(|_| AuthError::BadSignature)?;
        let expiry: i64 = expiry.parse().map_err(|_| AuthError::Malformed)?;
        if now.timestamp() >= expiry {
            return Err(AuthError::Expired);
        }
        let raw = hex::decode(who).map_err(|_| AuthError::Malformed)?;
        String::from_utf8(raw).map_err(|_| AuthError::Malformed)
    }
}
