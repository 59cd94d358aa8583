//! Payment codes: 128 random bits shown once as base32; only the SHA-256
//! of the code is kept.

use data_encoding::{BASE32_NOPAD, HEXLOWER};
use rand::RngCore;
use sha2::{Digest, Sha256};

pub fn new_code(rng: &mut impl RngCore) -> String {
    let mut token = [0u8; 16];
    rng.fill_bytes(&mut token);
    BASE32_NOPAD.encode(&token)
}

/// Hex SHA-256 of the code as typed, ignoring case and surrounding space.
pub fn hash_code(code: &str) -> String {
    HEXLOWER.encode(&Sha256::digest(code.trim().to_ascii_uppercase().as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct_and_hash_stably() {
        let mut rng = rand::rng();
        let a = new_code(&mut rng);
        let b = new_code(&mut rng);
        assert_ne!(a, b);
        assert_eq!(a.len(), 26);
        assert_eq!(hash_code(&a), hash_code(&format!(" {} ", a.to_lowercase())));
        assert_ne!(hash_code(&a), hash_code(&b));
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            hash_code("abc"),
            "b5d4045c3f466fa91fe2cc6abe79232a1a57cdf104f7a26e716e0a1e2789df78"
        );
    }
}
