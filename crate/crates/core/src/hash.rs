use sha2::{Digest, Sha256};

/// First `len` hex digits of the SHA-256 of `parts` joined by NUL. Stable
/// across platforms and releases, unlike `std::hash`.
pub fn stable_hex(parts: &[&str], len: usize) -> String {
    let mut hasher = Sha256::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0u8]);
        }
        hasher.update(p.as_bytes());
    }
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    hex[..len.min(hex.len())].to_string()
}

/// 64-bit seed derived from a parent seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let d = hasher.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}
