//! Trains the full model and the knowledge-free baseline on a small
//! synthetic task and compares validation accuracy.
//!
//!     cargo run --release --example train_and_eval

use kvqa::data::{gen_synthetic, SyntheticSpec};
use kvqa::features::FeatureDims;
use kvqa::model::{encode_instance, ModelConfig, TrainExample, Variant};
use kvqa::run::{fit, predict, FitSettings};

fn main() -> kvqa::Result<()> {
    let dims = FeatureDims {
        contextual: 128,
        subword: 64,
        region: 64,
    };
    let data = gen_synthetic(&SyntheticSpec::default(), &dims)?;
    let settings = FitSettings {
        lr: 3e-4,
        epochs: 20,
        ..FitSettings::default()
    };
    for variant in [Variant::Ektvqa, Variant::Tvqa] {
        let cfg = ModelConfig {
            variant,
            d_model: 64,
            n_heads: 8,
            n_layers: 2,
            validity_hidden: 128,
            dims,
            ..ModelConfig::default()
        };
        let kb = variant.uses_knowledge().then_some(&data.kb);
        let train = data
            .train
            .iter()
            .map(|i| {
                Ok(TrainExample::new(
                    encode_instance(i, kb, &cfg)?,
                    &data.vocab,
                    cfg.max_steps,
                ))
            })
            .collect::<kvqa::Result<Vec<_>>>()?;
        let val = data
            .val
            .iter()
            .map(|i| encode_instance(i, kb, &cfg))
            .collect::<kvqa::Result<Vec<_>>>()?;
        let result = fit(&cfg, &settings, &data.vocab, &train, &val, None, |line| {
            println!(
                "{variant:<7} epoch {:>2} loss {:.3} val {:5.1}%",
                line.epoch, line.loss, line.val_accuracy
            );
        })?;
        println!("{variant}: best {:.1}% at epoch {}", result.best_val, result.best_epoch);
        for p in predict(&result.best, &cfg, &data.vocab, &val[..3])? {
            println!("  {} -> {:?}", p.question_id, p.answer);
        }
    }
    Ok(())
}
