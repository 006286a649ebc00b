//! Scratch: per-lead salient-count statistics across records.

use ecgfuse::attr::{integrated_gradients, normalize_minmax, salient_set};
use ecgfuse::eval::{finetune, FinetuneConfig, FinetunedModel};
use ecgfuse::pretrain::{pretrain, TrainConfig};
use ecgfuse::signal::{
    preprocess_records, synthesize_corpus, ClassEffect, CorpusSpec, EcgRecord, Wave,
};
use std::collections::BTreeMap;

fn corpus(n: usize, length: usize, rate: f64, seed: u64) -> Vec<EcgRecord> {
    let spec = CorpusSpec {
        noise_std: 0.02,
        class_effect: Some(ClassEffect {
            lead: "II".into(),
            wave: Wave::S,
            scale: 2.5,
        }),
        heart_rate_range: (65.0, 95.0),
        ..CorpusSpec::balanced(n, length, rate, seed)
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
fn count_stats() {
    for (length, rate) in [(512usize, 128.0f64), (1024, 128.0)] {
        let recs = corpus(200, length, rate, 42);
        let pretrained = pretrain(
            &recs,
            &TrainConfig {
                epochs: 3,
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
        let (auc, _) = out.report.mean_std(|f| f.auroc);
        let model = FinetunedModel::new(
            out.fold_params[0].clone(),
            ft_cfg.lead_subset.clone(),
            ft_cfg.classifier,
        )
        .unwrap();

        // Salient-count stats over fold-0 validation records.
        let mut by_lead: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut by_lead_c1: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for p in out.predictions.iter().filter(|p| p.fold == 0) {
            let rec = &recs[p.record_index];
            let alphas = integrated_gradients(&model, rec, None, 32).unwrap();
            for (lead, alpha) in &alphas {
                let norm = normalize_minmax(alpha);
                let pct = 100.0 * salient_set(&norm, 0.75).len() as f64 / alpha.len() as f64;
                by_lead.entry(lead.clone()).or_default().push(pct);
                if p.label == 1 {
                    by_lead_c1.entry(lead.clone()).or_default().push(pct);
                }
            }
        }
        println!("L={length} rate={rate} auroc {auc:.3}");
        for (lead, values) in &by_lead {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let max = values.iter().cloned().fold(0.0f64, f64::max);
            let c1 = &by_lead_c1[lead];
            let c1_mean = c1.iter().sum::<f64>() / c1.len() as f64;
            println!(
                "  {lead:>4}: mean {mean:6.2}%  max {max:6.2}%  class1-mean {c1_mean:6.2}%"
            );
        }
    }
}
