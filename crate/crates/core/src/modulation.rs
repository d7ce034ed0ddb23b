//! Gray-labelled square constellations with unit average energy.

use serde::{Deserialize, Serialize};

use crate::linalg::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    None,
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::None => 0,
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        }
    }

    /// Maps `bits_per_symbol` bits to a constellation point.
    pub fn modulate(self, bits: &[u8]) -> C64 {
        match self {
            Modulation::None => C64::new(0.0, 0.0),
            Modulation::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                C64::new(bpsk(bits[0]) * s, bpsk(bits[1]) * s)
            }
            Modulation::Qam16 => {
                let s = 1.0 / 10f64.sqrt();
                C64::new(pam4(bits[0], bits[1]) * s, pam4(bits[2], bits[3]) * s)
            }
        }
    }

    /// Nearest-point decision, returned as bits.
    pub fn demodulate(self, z: C64) -> Vec<u8> {
        match self {
            Modulation::None => Vec::new(),
            Modulation::Qpsk => vec![(z.re < 0.0) as u8, (z.im < 0.0) as u8],
            Modulation::Qam16 => {
                let s = 10f64.sqrt();
                let (b0, b1) = slice_pam4(z.re * s);
                let (b2, b3) = slice_pam4(z.im * s);
                vec![b0, b1, b2, b3]
            }
        }
    }

    /// All constellation points with their labels.
    pub fn points(self) -> Vec<(Vec<u8>, C64)> {
        let n = self.bits_per_symbol();
        (0..(1usize << n))
            .map(|v| {
                let bits: Vec<u8> = (0..n).map(|b| ((v >> (n - 1 - b)) & 1) as u8).collect();
                let p = self.modulate(&bits);
                (bits, p)
            })
            .collect()
    }
}

fn bpsk(b: u8) -> f64 {
    1.0 - 2.0 * b as f64
}

/// Gray-coded 4-PAM: 00 → -3, 01 → -1, 11 → +1, 10 → +3.
fn pam4(b0: u8, b1: u8) -> f64 {
    match (b0, b1) {
        (0, 0) => -3.0,
        (0, 1) => -1.0,
        (1, 1) => 1.0,
        _ => 3.0,
    }
}

fn slice_pam4(x: f64) -> (u8, u8) {
    if x < -2.0 {
        (0, 0)
    } else if x < 0.0 {
        (0, 1)
    } else if x < 2.0 {
        (1, 1)
    } else {
        (1, 0)
    }
}
