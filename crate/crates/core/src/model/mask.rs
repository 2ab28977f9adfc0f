//! Additive attention bias over the `[q | obj | ocr | knw | prv]` rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::check_mask;
use crate::nn::{Tensor, MASK_NEG};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Each fact is visible only to its own OCR token.
    Constrained,
    /// Every row sees every row.
    Unconstrained,
    /// No knowledge rows at all.
    NoKnowledge,
    /// Facts are free rows visible to and from every non-decoder row.
    ImageLevel,
}

impl MaskMode {
    pub fn has_knowledge(self) -> bool {
        self != MaskMode::NoKnowledge
    }
}

/// Row counts per block; `knw` equals `ocr` in knowledge modes and 0 otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSizes {
    pub q: usize,
    pub obj: usize,
    pub ocr: usize,
    pub knw: usize,
    pub prv: usize,
}

impl BlockSizes {
    pub fn new(l: usize, m: usize, n: usize, d: usize, mode: MaskMode) -> Self {
        Self {
            q: l,
            obj: m,
            ocr: n,
            knw: if mode.has_knowledge() { n } else { 0 },
            prv: d,
        }
    }

    pub fn total(&self) -> usize {
        self.q + self.obj + self.ocr + self.knw + self.prv
    }

    pub fn obj_start(&self) -> usize {
        self.q
    }

    pub fn ocr_start(&self) -> usize {
        self.q + self.obj
    }

    pub fn knw_start(&self) -> usize {
        self.ocr_start() + self.ocr
    }

    pub fn prv_start(&self) -> usize {
        self.knw_start() + self.knw
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMaskSpec {
    pub sizes: BlockSizes,
    pub mode: MaskMode,
    pub matrix: Tensor,
}

impl AttentionMaskSpec {
    pub fn is_open(&self, row: usize, col: usize) -> bool {
        self.matrix.at(row, col) == 0.0
    }

    /// Whether decoder rows only see earlier decoder rows and no other row
    /// sees the decoder block, so teacher-forced steps cannot look ahead.
    pub fn is_causal(&self) -> bool {
        let s = &self.sizes;
        let p = s.prv_start();
        (0..s.total()).all(|r| {
            (p..s.total()).all(|c| {
                let allowed = r >= p && c <= r;
                allowed || !self.is_open(r, c)
            })
        })
    }

    /// Copy in which knowledge rows see only themselves and nothing else
    /// sees them, which removes the knowledge path from every other row.
    pub fn with_knowledge_isolated(&self) -> Self {
        let mut out = self.clone();
        let s = self.sizes;
        let (k0, k1) = (s.knw_start(), s.knw_start() + s.knw);
        let e = s.total();
        let data = out.matrix.data_mut();
        for r in 0..e {
            for c in k0..k1 {
                data[r * e + c] = if r == c { 0.0 } else { MASK_NEG };
            }
        }
        for r in k0..k1 {
            for c in 0..e {
                data[r * e + c] = if r == c { 0.0 } else { MASK_NEG };
            }
        }
        out
    }
}

/// Builds the `E × E` bias for block sizes `(L, M, N, D)`.
///
/// In every mode except unconstrained, question/object/OCR rows never see
/// decoder rows and decoder rows see each other causally. `open_knowledge`
/// additionally lets constrained knowledge rows and question/object rows
/// see each other.
pub fn build_attention_mask(
    l: usize,
    m: usize,
    n: usize,
    d: usize,
    mode: MaskMode,
    open_knowledge: bool,
) -> Result<AttentionMaskSpec> {
    if d == 0 {
        return Err(Error::contract("attention mask needs at least one decoder row"));
    }
    let sizes = BlockSizes::new(l, m, n, d, mode);
    let e = sizes.total();
    let mut matrix = Tensor::full(&[e, e], MASK_NEG);
    if mode == MaskMode::Unconstrained {
        matrix = Tensor::zeros(&[e, e]);
    } else {
        let ctx = 0..sizes.knw_start();
        let knw = sizes.knw_start()..sizes.prv_start();
        let prv = sizes.prv_start()..e;
        let data = matrix.data_mut();
        let mut open = |r: usize, c: usize| data[r * e + c] = 0.0;
        for r in ctx.clone() {
            for c in ctx.clone() {
                open(r, c);
            }
        }
        for (j, r) in knw.clone().enumerate() {
            let ocr_row = sizes.ocr_start() + j;
            match mode {
                MaskMode::Constrained => {
                    open(r, r);
                    open(r, ocr_row);
                    open(ocr_row, r);
                    if open_knowledge {
                        for c in 0..sizes.ocr_start() {
                            open(r, c);
                            open(c, r);
                        }
                    }
                }
                MaskMode::ImageLevel => {
                    for c in 0..sizes.prv_start() {
                        open(r, c);
                        open(c, r);
                    }
                }
                MaskMode::NoKnowledge | MaskMode::Unconstrained => unreachable!("no knowledge rows"),
            }
        }
        for (i, r) in prv.clone().enumerate() {
            for c in 0..sizes.prv_start() {
                open(r, c);
            }
            for c in prv.start..=prv.start + i {
                open(r, c);
            }
        }
    }
    check_mask(&matrix)?;
    Ok(AttentionMaskSpec { sizes, mode, matrix })
}
