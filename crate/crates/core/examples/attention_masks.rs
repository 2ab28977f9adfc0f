//! Prints the attention bias of every mask mode for a small input.
//! `.` marks an open entry and `#` a blocked one.
//!
//!     cargo run --example attention_masks

use kvqa::model::{build_attention_mask, MaskMode};

fn main() -> kvqa::Result<()> {
    let (l, m, n, d) = (2, 2, 3, 3);
    for mode in [
        MaskMode::Constrained,
        MaskMode::Unconstrained,
        MaskMode::NoKnowledge,
        MaskMode::ImageLevel,
    ] {
        let mask = build_attention_mask(l, m, n, d, mode, false)?;
        let s = mask.sizes;
        let e = s.total();
        let label = |i: usize| match i {
            _ if i < s.obj_start() => 'q',
            _ if i < s.ocr_start() => 'o',
            _ if i < s.knw_start() => 't',
            _ if i < s.prv_start() => 'k',
            _ => 'p',
        };
        println!("\n{mode:?}  (q question, o object, t ocr, k knowledge, p decoder)");
        println!("   {}", (0..e).map(label).collect::<String>());
        for r in 0..e {
            let row: String = (0..e).map(|c| if mask.is_open(r, c) { '.' } else { '#' }).collect();
            println!(" {} {row}", label(r));
        }
    }
    Ok(())
}
