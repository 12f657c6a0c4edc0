use core::fmt;

use serde::{Deserialize, Serialize};

use super::reference::{sbox, Block};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LeakageKind {
    /// Least significant bit of the S-box output, 2 classes.
    Lsb,
    /// Hamming weight of the S-box output, 9 classes.
    Hw,
}

impl LeakageKind {
    pub fn code(self) -> u8 {
        match self {
            LeakageKind::Lsb => 0,
            LeakageKind::Hw => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LeakageKind::Lsb),
            1 => Some(LeakageKind::Hw),
            _ => None,
        }
    }
}

impl fmt::Display for LeakageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LeakageKind::Lsb => "lsb",
            LeakageKind::Hw => "hw",
        })
    }
}

/// Target intermediate `Sbox(p[b] ^ k[b])` and how it is turned into a class.
///
/// `byte_index` is zero based; the default of 2 is the third state byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeakageModel {
    pub kind: LeakageKind,
    pub byte_index: u8,
}

impl Default for LeakageModel {
    fn default() -> Self {
        LeakageModel { kind: LeakageKind::Lsb, byte_index: 2 }
    }
}

impl LeakageModel {
    pub fn new(kind: LeakageKind, byte_index: u8) -> Self {
        assert!(byte_index < 16, "byte index {byte_index} out of range");
        LeakageModel { kind, byte_index }
    }

    pub fn class_count(&self) -> usize {
        match self.kind {
            LeakageKind::Lsb => 2,
            LeakageKind::Hw => 9,
        }
    }

    /// Class of the S-box output for the xored byte `p[b] ^ k[b]`.
    pub fn class_of_xored(&self, xored: u8) -> usize {
        let y = sbox(xored);
        match self.kind {
            LeakageKind::Lsb => usize::from(y & 1),
            LeakageKind::Hw => y.count_ones() as usize,
        }
    }

    /// Class of a plaintext byte under a key-byte hypothesis.
    pub fn class_for(&self, plaintext_byte: u8, key_byte: u8) -> usize {
        self.class_of_xored(plaintext_byte ^ key_byte)
    }
}

pub fn label_of(plaintext: &Block, key: &Block, model: &LeakageModel) -> usize {
    let b = model.byte_index as usize;
    model.class_for(plaintext[b], key[b])
}

/// Inputs and class label of one acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionRecord {
    pub plaintext: Block,
    pub key: Block,
    pub label: u8,
}

impl AcquisitionRecord {
    pub fn new(plaintext: Block, key: Block, model: &LeakageModel) -> Self {
        AcquisitionRecord { plaintext, key, label: label_of(&plaintext, &key, model) as u8 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_byte_labels() {
        let lsb = LeakageModel::new(LeakageKind::Lsb, 2);
        let hw = LeakageModel::new(LeakageKind::Hw, 2);
        assert_eq!(label_of(&[0; 16], &[0; 16], &lsb), 1);
        assert_eq!(label_of(&[0; 16], &[0; 16], &hw), 4);
        assert_eq!(lsb.class_count(), 2);
        assert_eq!(hw.class_count(), 9);
    }

    #[test]
    fn hw_histogram_is_binomial() {
        let hw = LeakageModel::new(LeakageKind::Hw, 0);
        let mut counts = [0usize; 9];
        for x in 0..=255u8 {
            counts[hw.class_of_xored(x)] += 1;
        }
        // the S-box is a permutation, so the class histogram is exactly C(8, h)
        assert_eq!(counts, [1, 8, 28, 56, 70, 56, 28, 8, 1]);
    }

    proptest! {
        #[test]
        fn label_depends_only_on_the_target_byte(
            p in any::<[u8; 16]>(), k in any::<[u8; 16]>(),
            p2 in any::<[u8; 16]>(), k2 in any::<[u8; 16]>(),
            b in 0u8..16, hw in any::<bool>(),
        ) {
            let model = LeakageModel::new(if hw { LeakageKind::Hw } else { LeakageKind::Lsb }, b);
            let mut p2 = p2;
            let mut k2 = k2;
            let i = b as usize;
            // same xored target byte, everything else arbitrary
            k2[i] = k[i];
            p2[i] = p[i];
            let rotated_k = k2[i].wrapping_add(17);
            let mut p3 = p2;
            let mut k3 = k2;
            k3[i] = rotated_k;
            p3[i] = p[i] ^ k[i] ^ rotated_k;
            let l = label_of(&p, &k, &model);
            prop_assert_eq!(l, label_of(&p2, &k2, &model));
            prop_assert_eq!(l, label_of(&p3, &k3, &model));
            prop_assert!(l < model.class_count());
        }
    }
}
