//! End-to-end throughput benchmarks: one short engine run, the frame
//! codec hot path, and a heatmap build over a prejoined link.

use camnet_core::codec::{decode_cam, encode_cam};
use camnet_core::{
    join_link, pdr_heatmap, positions_from_tx_log, CamFrame, MacAddr, NicId, Scenario, ORIGIN,
};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

fn short_highway() -> Scenario {
    let mut sc = Scenario::preset("v2v-highway").expect("preset");
    sc.duration_us = 5_000_000;
    sc
}

fn bench_engine(c: &mut Criterion) {
    let sc = short_highway();
    c.bench_function("engine_v2v_highway_5s", |b| {
        b.iter(|| camnet_core::run(black_box(&sc)).unwrap())
    });
}

fn bench_codec(c: &mut Criterion) {
    let frame = CamFrame {
        src_mac: MacAddr([2, 0, 0, 0, 1, 0]),
        nic_id: NicId::Hp,
        seq_num: 123_456,
        gps_lon: ORIGIN.1,
        gps_lat: ORIGIN.0,
        inter_lon: ORIGIN.1 + 0.0012,
        inter_lat: ORIGIN.0 - 0.0003,
        gps_speed: 13.89,
        inter_speed: 13.91,
        heading: 92.5,
        timestamp_us: 1_234_567_890,
    };
    c.bench_function("codec_round_trip", |b| {
        b.iter(|| decode_cam(&encode_cam(black_box(&frame))).unwrap())
    });
}

fn bench_heatmap(c: &mut Criterion) {
    let out = camnet_core::run(&short_highway()).expect("run");
    let east = out
        .logs
        .iter()
        .find(|l| l.node_id == "vehicle-east")
        .unwrap();
    let west = out
        .logs
        .iter()
        .find(|l| l.node_id == "vehicle-west")
        .unwrap();
    let tx = east.tx[1].clone();
    let rx = west.rx[1].clone();
    let track = positions_from_tx_log("vehicle-west", &west.tx[1]).unwrap();
    c.bench_function("join_and_heatmap_lp", |b| {
        b.iter_batched(
            || (tx.clone(), rx.clone()),
            |(tx, rx)| {
                let link = join_link(&tx, &rx).unwrap();
                pdr_heatmap(black_box(&link), &tx, &track, 25.0, 20)
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_engine, bench_codec, bench_heatmap);
criterion_main!(benches);
