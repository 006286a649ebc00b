//! Scratch experiments for the acceptance-scale configurations.

use ecgfuse::attr::{igar_report, TAU_DEFAULT};
use ecgfuse::diff::CounterRng;
use ecgfuse::eval::{finetune, FinetuneConfig, FinetunedModel};
use ecgfuse::pretrain::{pretrain, TrainConfig};
use ecgfuse::signal::{
    preprocess_records, synthesize_corpus, ClassEffect, CorpusSpec, EcgRecord, Wave,
};

fn corpus(n: usize, seed: u64) -> Vec<EcgRecord> {
    let spec = CorpusSpec {
        noise_std: 0.02,
        class_effect: Some(ClassEffect {
            lead: "II".into(),
            wave: Wave::S,
            scale: 2.5,
        }),
        heart_rate_range: (65.0, 95.0),
        ..CorpusSpec::balanced(n, 512, 128.0, seed)
    };
    let raw: Vec<EcgRecord> = synthesize_corpus(&spec)
        .unwrap()
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    preprocess_records(&raw).unwrap()
}

#[test]
#[ignore]
fn criterion4_convergence() {
    // Table II optimizer settings: AdamW, lr 1e-4, wd 1e-4; 30 epochs.
    let t0 = std::time::Instant::now();
    let recs = corpus(200, 42);
    let out = pretrain(
        &recs,
        &TrainConfig {
            epochs: 30,
            batch_size: 8,
            latent_dim: 64,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            seed: 5,
            chunk_size: 8,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let first = &out.log[0];
    let last = out.log.last().unwrap();
    println!(
        "epoch1 total {:.4} -> final {:.4} (ratio {:.3})  beta {} -> {}  [{:.1}s]",
        first.total,
        last.total,
        last.total / first.total,
        first.beta,
        last.beta,
        t0.elapsed().as_secs_f64()
    );
    for e in &out.log {
        println!(
            "  epoch {:2}: mse {:.4} kl {:.4} lra {:.5} beta {:.2} total {:.4}",
            e.epoch, e.mse, e.kl, e.alignment, e.beta, e.total
        );
    }
}

#[test]
#[ignore]
fn criterion5_and_7_transfer_and_attribution() {
    let t0 = std::time::Instant::now();
    let recs = corpus(200, 42);
    let pretrained = pretrain(
        &recs,
        &TrainConfig {
            epochs: 8,
            batch_size: 16,
            latent_dim: 64,
            learning_rate: 1e-3,
            seed: 5,
            chunk_size: 8,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let ft_cfg = FinetuneConfig {
        seed: 9,
        learning_rate: 1e-3,
        ..FinetuneConfig::new(
            ecgfuse::signal::LEADS_LIMB6
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
    };
    let out = finetune(&pretrained.params, &recs, &ft_cfg).unwrap();
    let (auc, auc_std) = out.report.mean_std(|f| f.auroc);
    let min_fold = out
        .report
        .folds
        .iter()
        .map(|f| f.auroc)
        .fold(f64::INFINITY, f64::min);
    println!(
        "transfer auroc {auc:.3}+-{auc_std:.3} min {min_fold:.3}  [{:.1}s]",
        t0.elapsed().as_secs_f64()
    );

    // Shuffled-label control.
    let mut shuffled = recs.clone();
    let mut labels: Vec<i32> = shuffled.iter().map(|r| r.label.unwrap()).collect();
    CounterRng::new(1234).shuffle(&mut labels);
    for (rec, label) in shuffled.iter_mut().zip(labels) {
        rec.label = Some(label);
    }
    let null_out = finetune(&pretrained.params, &shuffled, &ft_cfg).unwrap();
    let (null_mcc, _) = null_out.report.mean_std(|f| f.mcc);
    println!("shuffled-label mean MCC {null_mcc:.3}");

    // Attribution on validation records of fold 0.
    let model = FinetunedModel::new(
        out.fold_params[0].clone(),
        ft_cfg.lead_subset.clone(),
        ft_cfg.classifier,
    )
    .unwrap();
    let val: Vec<EcgRecord> = out
        .predictions
        .iter()
        .filter(|p| p.fold == 0)
        .map(|p| recs[p.record_index].clone())
        .collect();
    let report = igar_report(&model, &val, TAU_DEFAULT, 32).unwrap();
    println!("lead-level IGAR over {} records:", val.len());
    for (lead, ms) in &report.per_lead {
        println!("  {lead}: {:.2} +- {:.2}", ms.mean, ms.std);
    }
    if let Some(waves) = report.per_wave.get("II") {
        println!("lead II wave-level:");
        for (wave, ms) in waves {
            println!("  {wave}: {:.2} +- {:.2}", ms.mean, ms.std);
        }
    }
    println!("undefined: {:?}  skipped {}", report.undefined, report.skipped_records);
    println!("[{:.1}s total]", t0.elapsed().as_secs_f64());
}
