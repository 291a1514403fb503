use criterion::{black_box, criterion_group, criterion_main, Criterion};
use csm6lo_core::csm::{decode_control, encode_control, ScValue, SharedKey};
use csm6lo_core::frag::{decode_header, encode_header, fragment_packet, FragmentHeader, Fragmentation};
use csm6lo_core::reassembly::{AssemblyBuffer, OpenGate};
use csm6lo_core::{LinkAddr, SimTime};

fn headers(c: &mut Criterion) {
    let h = FragmentHeader::subsequent(512, 1, 12);
    let wire = encode_header(&h).unwrap();
    c.bench_function("encode_header", |b| b.iter(|| encode_header(black_box(&h))));
    c.bench_function("decode_header", |b| b.iter(|| decode_header(black_box(&wire))));
}

fn packets(c: &mut Criterion) {
    let payload = vec![0xA5u8; 512];
    c.bench_function("fragment_512", |b| b.iter(|| fragment_packet(black_box(&payload), 7, 102)));
    let Fragmentation::Fragments(frags) = fragment_packet(&payload, 7, 102).unwrap() else {
        unreachable!()
    };
    c.bench_function("reassemble_512", |b| {
        b.iter(|| {
            let mut buf = AssemblyBuffer::default();
            for f in &frags {
                black_box(buf.on_fragment(f, LinkAddr(3), SimTime::ZERO, &OpenGate));
            }
        })
    });
}

fn control(c: &mut Criterion) {
    let key = SharedKey([9; 16]);
    let (a, b) = (LinkAddr(1).link_local(), LinkAddr(2).link_local());
    let body = [0u8; 19];
    let msg = encode_control(&body, &key, a, b, ScValue(1), ScValue(2));
    c.bench_function("csm_encode", |bn| bn.iter(|| encode_control(black_box(&body), &key, a, b, ScValue(1), ScValue(2))));
    c.bench_function("csm_decode", |bn| bn.iter(|| decode_control(black_box(&msg), &key, ScValue(1))));
}

criterion_group!(benches, headers, packets, control);
criterion_main!(benches);
