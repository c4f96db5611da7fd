use std::hint::black_box;

use arma_bench::{features, operators, sbm, EDGE_SIZES};
use arma_core::autodiff::{Activation, ParamSet, Tape};
use arma_core::layers::{ArmaLayer, ArmaLayerConfig, ForwardMode, GcnConfig, GcnLayer};
use arma_core::linalg::spmm;
use arma_core::rng::{stream_rng, STREAM_INIT};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn spmm_bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmm");
    for n_edges in EDGE_SIZES {
        let ds = sbm(n_edges);
        let ops = operators(&ds);
        let x = features(&ds);
        group.throughput(Throughput::Elements(ops.modified.nnz() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n_edges), &n_edges, |b, _| {
            b.iter(|| spmm(black_box(&ops.modified), black_box(x)).unwrap())
        });
    }
    group.finish();
}

/// One forward and backward pass of a single layer mapping 16 to 16 features.
fn layer_bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("layer_forward_backward");
    for n_edges in EDGE_SIZES {
        let ds = sbm(n_edges);
        let ops = operators(&ds);
        let x = features(&ds).clone();
        let f = x.n_cols();
        let mut rng = stream_rng(0, STREAM_INIT);

        let mut arma_params = ParamSet::new();
        let arma = ArmaLayer::new(
            &mut arma_params,
            "arma",
            ArmaLayerConfig {
                stacks: 2,
                depth: 1,
                f_in: f,
                f_out: 16,
                activation: Activation::Relu,
                skip_dropout: 0.0,
                bias: false,
            },
            &mut rng,
        );
        group.bench_with_input(BenchmarkId::new("arma", n_edges), &n_edges, |b, _| {
            b.iter(|| {
                let mut tape = Tape::new();
                let xv = tape.constant(x.clone());
                let mut r = stream_rng(0, 0);
                let mut mode = ForwardMode {
                    training: false,
                    rng: &mut r,
                };
                let out = arma
                    .forward(&mut tape, &arma_params, &ops.modified, xv, &mut mode)
                    .unwrap();
                let loss = tape.sum(out);
                let mut params = arma_params.clone();
                tape.backward(loss, &mut params).unwrap();
                black_box(params)
            })
        });

        let mut gcn_params = ParamSet::new();
        let gcn = GcnLayer::new(
            &mut gcn_params,
            "gcn",
            GcnConfig {
                gamma: 1.0,
                f_in: f,
                f_out: 16,
                activation: Activation::Relu,
                bias: false,
            },
            &mut rng,
        );
        group.bench_with_input(BenchmarkId::new("gcn", n_edges), &n_edges, |b, _| {
            b.iter(|| {
                let mut tape = Tape::new();
                let xv = tape.constant(x.clone());
                let out = gcn.forward(&mut tape, &gcn_params, &ops.gcn, xv).unwrap();
                let loss = tape.sum(out);
                let mut params = gcn_params.clone();
                tape.backward(loss, &mut params).unwrap();
                black_box(params)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, spmm_bench, layer_bench);
criterion_main!(benches);
