//! Parallel-vs-sequential comparison of the two data-parallel hot paths:
//! elementwise kernel combines and independent sweep cells.
//!
//! Build with the default `parallel` feature to measure the rayon paths;
//! rebuild with `--no-default-features` to measure the sequential fallback
//! under the same benchmark names. The `scalar_loop` and `seq` series are
//! always sequential, so a single default-feature run already shows the
//! crossover.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use hetccl_core::parallel::{map_collect, map_collect_seq};
use hetccl_core::platform::{DType, KernelLibrary, KernelName, Platform};

fn combine_payload(bytes: usize) -> Vec<u8> {
    (0..bytes / 4).flat_map(|i| (i as f32).sin().to_le_bytes()).collect()
}

/// Elementwise f32 sums at sizes straddling the parallel threshold.
fn bench_combine(c: &mut Criterion) {
    let library = KernelLibrary::standard(Platform::CudaLike);
    let mut group = c.benchmark_group("combine_f32_sum");
    group.sample_size(20);
    for &bytes in &[1usize << 14, 1 << 16, 1 << 20, 1 << 23] {
        let operand = combine_payload(bytes);
        group.throughput(Throughput::Bytes(bytes as u64));
        group.bench_with_input(BenchmarkId::new("kernel", bytes), &bytes, |b, _| {
            let mut acc = operand.clone();
            b.iter(|| library.combine(KernelName::ReduceSum, DType::F32, &mut acc, &operand));
        });
        group.bench_with_input(BenchmarkId::new("scalar_loop", bytes), &bytes, |b, _| {
            let mut acc = operand.clone();
            b.iter(|| {
                for (a, o) in acc.chunks_exact_mut(4).zip(operand.chunks_exact(4)) {
                    let sum = f32::from_le_bytes(a.try_into().unwrap())
                        + f32::from_le_bytes(o.try_into().unwrap());
                    a.copy_from_slice(&sum.to_le_bytes());
                }
            });
        });
    }
    group.finish();
}

/// One synthetic sweep cell: enough arithmetic to dwarf scheduling costs.
fn cell_work(seed: &u64) -> f64 {
    let mut state = *seed | 1;
    let mut acc = 0.0f64;
    for _ in 0..20_000 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        acc += (state >> 11) as f64 * 1.0e-18;
    }
    acc
}

/// Independent sweep cells fanned out vs. walked in order.
fn bench_sweep_cells(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep_cells");
    group.sample_size(20);
    for &cells in &[4usize, 16, 64] {
        let seeds: Vec<u64> = (0..cells as u64).collect();
        group.throughput(Throughput::Elements(cells as u64));
        group.bench_with_input(BenchmarkId::new("par", cells), &seeds, |b, seeds| {
            b.iter(|| map_collect(seeds, cell_work));
        });
        group.bench_with_input(BenchmarkId::new("seq", cells), &seeds, |b, seeds| {
            b.iter(|| map_collect_seq(seeds, cell_work));
        });
    }
    group.finish();
}

criterion_group!(benches, bench_combine, bench_sweep_cells);
criterion_main!(benches);
