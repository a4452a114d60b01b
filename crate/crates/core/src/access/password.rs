use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

const SALT_LEN: usize = 16;
const KEY_LEN: usize = 32;

/// PBKDF2-HMAC-SHA256 with a per-user random salt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PasswordHasher {
    pub iterations: u32,
}

impl Default for PasswordHasher {
    fn default() -> Self {
        PasswordHasher {
            iterations: 210_000,
        }
    }
}

/// Encoded as `pbkdf2-sha256$<iterations>$<salt hex>$<key hex>`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PasswordHash {
    iterations: u32,
    salt: Vec<u8>,
    key: Vec<u8>,
}

impl fmt::Debug for PasswordHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PasswordHash(pbkdf2-sha256, {} iterations)", self.iterations)
    }
}

impl PasswordHasher {
    pub fn hash(&self, password: &str) -> PasswordHash {
        let mut salt = vec![0u8; SALT_LEN];
        rand::rng().fill_bytes(&mut salt);
        let key = derive(password, &salt, self.iterations);
        PasswordHash {
            iterations: self.iterations,
            salt,
            key,
        }
    }
}

fn derive(password: &str, salt: &[u8], iterations: u32) -> Vec<u8> {
    let mut key = vec![0u8; KEY_LEN];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, iterations, &mut key);
    key
}

impl PasswordHash {
    /// Constant-time comparison against a freshly derived key.
    pub fn verify(&self, password: &str) -> bool {
        let candidate = derive(password, &self.salt, self.iterations);
        candidate.len() == self.key.len()
            && candidate
                .iter()
                .zip(&self.key)
                .fold(0u8, |acc, (a, b)| acc | (a ^ b))
                == 0
    }
}

impl From<PasswordHash> for String {
    fn from(h: PasswordHash) -> String {
        format!(
            "pbkdf2-sha256${}${}${}",
            h.iterations,
            hex::encode(&h.salt),
            hex::encode(&h.key)
        )
    }
}

impl TryFrom<String> for PasswordHash {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        let mut parts = s.split('$');
        let (Some("pbkdf2-sha256"), Some(iter), Some(salt), Some(key), None) =
            (parts.next(), parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err("unrecognised password hash format".into());
        };
        let iterations = iter.parse().map_err(|_| "bad iteration count")?;
        if iterations == 0 {
            return Err("bad iteration count".into());
        }
        Ok(PasswordHash {
            iterations,
            salt: hex::decode(salt).map_err(|_| "bad salt")?,
            key: hex::decode(key).map_err(|_| "bad key")?,
        })
    }
}

/// Random alphanumeric password for provisioning.
pub fn generate_password(len: usize) -> String {
    use rand::Rng;
    const ALPHABET: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz23456789";
    let mut rng = rand::rng();
    (0..len)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
        .collect()
}
