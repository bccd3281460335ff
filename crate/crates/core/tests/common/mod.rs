#![allow(dead_code)]

use edgetune_core::device::{DeviceProfile, FrequencyGrid, InterferenceLaw, ModelWorkloadSpec};
use edgetune_core::gp::KernelKind;

/// A small device for fast property tests.
pub fn toy_profile() -> DeviceProfile {
    DeviceProfile {
        name: "toy".into(),
        grid: FrequencyGrid {
            cpu_freqs: vec![600.0, 1200.0, 1800.0],
            gpu_freqs: vec![150.0, 400.0, 700.0, 1000.0, 1300.0],
            mem_freqs: vec![300.0, 800.0, 1300.0, 1900.0],
            batch_sizes: vec![1, 2, 4, 8],
        },
        workload: ModelWorkloadSpec {
            name: "toy-net".into(),
            flops_per_query: 0.8,
            bytes_per_query: 0.05,
            preprocess_ms_base: 2.0,
            params_millions: 5.3,
        },
        workloads: vec![],
        compute_throughput_coeff: 0.15,
        mem_bandwidth_coeff: 0.01,
        static_power_w: 4.0,
        gpu_power_coeff: 2.5,
        gpu_power_exponent: 2.2,
        mem_power_coeff: 0.8,
        mem_power_exponent: 1.6,
        cpu_power_coeff: 0.6,
        cpu_power_exponent: 2.4,
        governor_utilization_target: 0.8,
        noise_sigma_base: 0.03,
        noise_sigma_small_batch: 0.08,
        eval_cost_s: 10.0,
        rng_seed: 3,
        gpu_min_tuning: false,
        surrogate_kernel: KernelKind::SquaredExponential,
        interference: InterferenceLaw { flops_coeff: 0.2, ai_coeff: 1.0 },
        reference_finetune: None,
        noise_enabled: true,
    }
}
