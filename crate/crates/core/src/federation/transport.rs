use fedhome_nn::ParamVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMode {
    #[default]
    Plaintext,
}

/// Carries parameter vectors between cloud and clients. Only the plaintext
/// mode exists; an encrypting transport would replace `deliver` and
/// `wire_bytes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TransportStub {
    pub mode: TransportMode,
}

impl TransportStub {
    pub fn deliver(&self, params: ParamVector) -> ParamVector {
        match self.mode {
            TransportMode::Plaintext => params,
        }
    }

    /// Bytes on the wire for one parameter vector: 8 per scalar.
    pub fn wire_bytes(&self, param_count: usize) -> u64 {
        match self.mode {
            TransportMode::Plaintext => 8 * param_count as u64,
        }
    }
}
