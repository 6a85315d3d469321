use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Incremental SHA-256 over length-prefixed fields, so that field boundaries
/// cannot be shifted without changing the digest.
#[derive(Default)]
pub struct Sha256Writer {
    inner: Sha256,
}

impl Sha256Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(&mut self, value: impl AsRef<[u8]>) -> &mut Self {
        let bytes = value.as_ref();
        self.inner.update((bytes.len() as u64).to_le_bytes());
        self.inner.update(bytes);
        self
    }

    pub fn finish_hex(self) -> String {
        hex::encode(self.inner.finalize())
    }
}
