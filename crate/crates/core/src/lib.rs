//! Multi-lead ECG variational autoencoder with hierarchical latent-expert
//! fusion.
//!
//! Each ECG lead is encoded by its own convolutional encoder into a diagonal
//! Gaussian latent expert. The experts are fused in two levels: a
//! product-of-experts combines them into a shared expert, then a gated
//! mixture-of-experts blends the lead experts and the shared expert into one
//! joint latent distribution. A shared transposed-convolution decoder
//! reconstructs every lead from the joint latent during unsupervised
//! pre-training; fine-tuning freezes the encoders and trains a small
//! classifier on the fused latent mean. Integrated-gradients attribution
//! ratios quantify which leads and ECG waves drive the classifier.
//!
//! Everything runs on a deterministic, seeded CPU compute graph
//! ([`diff`]) so that identical seeds reproduce checkpoints and metric
//! reports bitwise. Batch-level work is data-parallel via rayon (the
//! `parallel` feature, on by default) with a sequential fallback that
//! produces bit-identical results.

pub mod attr;
pub mod diff;
pub mod eval;
pub mod exec;
pub mod fusion;
pub mod loss;
pub mod nets;
pub mod pretrain;
pub mod signal;
