use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mask::MaskMode;
use crate::error::{Error, Result};
use crate::features::types::FeatureDims;
use crate::knowledge::SelectionPolicy;

/// Model family: full model, knowledge-free baseline and four ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    #[serde(rename = "EKTVQA")]
    Ektvqa,
    #[serde(rename = "TVQA")]
    Tvqa,
    #[serde(rename = "EKTVQA_UnC")]
    EktvqaUnc,
    #[serde(rename = "EKTVQA_Rnd")]
    EktvqaRnd,
    #[serde(rename = "EKTVQA_All")]
    EktvqaAll,
    #[serde(rename = "KBVQA-style")]
    KbvqaStyle,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Ektvqa,
        Variant::Tvqa,
        Variant::EktvqaUnc,
        Variant::EktvqaRnd,
        Variant::EktvqaAll,
        Variant::KbvqaStyle,
    ];

    pub fn mask_mode(self) -> MaskMode {
        match self {
            Variant::Ektvqa | Variant::EktvqaRnd | Variant::EktvqaAll => MaskMode::Constrained,
            Variant::Tvqa => MaskMode::NoKnowledge,
            Variant::EktvqaUnc => MaskMode::Unconstrained,
            Variant::KbvqaStyle => MaskMode::ImageLevel,
        }
    }

    /// `None` for the knowledge-free baseline.
    pub fn selection(self) -> Option<SelectionPolicy> {
        match self {
            Variant::Tvqa => None,
            Variant::EktvqaRnd => Some(SelectionPolicy::Random),
            Variant::EktvqaAll => Some(SelectionPolicy::All),
            Variant::Ektvqa | Variant::EktvqaUnc | Variant::KbvqaStyle => Some(SelectionPolicy::Contextual),
        }
    }

    pub fn uses_knowledge(self) -> bool {
        self.selection().is_some()
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ektvqa => "EKTVQA",
            Variant::Tvqa => "TVQA",
            Variant::EktvqaUnc => "EKTVQA_UnC",
            Variant::EktvqaRnd => "EKTVQA_Rnd",
            Variant::EktvqaAll => "EKTVQA_All",
            Variant::KbvqaStyle => "KBVQA-style",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// Architecture hyper-parameters shared by training and inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Width of the validity projection.
    pub validity_hidden: usize,
    pub max_steps: usize,
    /// Lets constrained knowledge rows exchange attention with question and
    /// object rows.
    pub open_knowledge: bool,
    pub dims: FeatureDims,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Ektvqa,
            d_model: 768,
            n_heads: 8,
            n_layers: 4,
            validity_hidden: 256,
            max_steps: 12,
            open_knowledge: false,
            dims: FeatureDims::default(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_steps == 0 || self.max_steps > crate::features::MAX_DECODE_STEPS {
            return Err(Error::Config(format!(
                "max_steps must be in 1..={}",
                crate::features::MAX_DECODE_STEPS
            )));
        }
        if self.validity_hidden == 0 {
            return Err(Error::Config("validity_hidden must be positive".into()));
        }
        Ok(())
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.name()));
        }
        assert!("EKTVQA_X".parse::<Variant>().is_err());
    }

    #[test]
    fn consistency() {
        for v in Variant::ALL {
            assert_eq!(v.uses_knowledge(), v.mask_mode().has_knowledge());
        }
    }
}
