use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbb_core::synthetic::{generate_database, perturb, SyntheticConfig};
use sbb_core::{emb_lsh, sim_lsh, EmbeddingParams, PerceptualHash};
use sbb_crypto::OprfKey;
use sbb_net::client::{make_request, send_raw};
use sbb_net::wire::{encode, kind, ErrorCode, PROTOCOL_VERSION};
use sbb_net::{query, serve, Database, Message, Mode, ServerConfig, ServerHandle};

fn start(db: Vec<PerceptualHash>, k: usize, seed: u64) -> ServerHandle {
    let key = OprfKey::random(&mut ChaCha8Rng::seed_from_u64(seed));
    serve("127.0.0.1:0", Database::new(db), ServerConfig { k }, key).unwrap()
}

fn random_db(n: usize, rng: &mut ChaCha8Rng) -> Vec<PerceptualHash> {
    (0..n).map(|_| PerceptualHash::from_words(rng.random())).collect()
}

#[test]
fn k_equal_d_returns_whole_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let db = random_db(300, &mut rng);
    let server = start(db.clone(), 9, 1);
    let p = EmbeddingParams::new(9, 0.05, 9).unwrap();
    let q = PerceptualHash::from_words(rng.random());
    let out = query(server.local_addr(), &q, Some(&emb_lsh(&q, &p, &mut rng)), Mode::Retrieval, 32, &mut rng).unwrap();
    assert_eq!(out.bucket_size, db.len());
    assert_eq!(out.metrics.response_body_bytes, 4 + 32 * db.len());
    server.shutdown();
}

#[test]
fn malformed_request_gets_error_frame() {
    let server = start(vec![PerceptualHash::ZERO], 3, 2);
    // d = 2 with index 7 twice
    let body = [0u8, 0, 2, 0, 7, 0, 7, 0];
    let mut frame = ((body.len() + 2) as u32).to_be_bytes().to_vec();
    frame.extend_from_slice(&[PROTOCOL_VERSION, kind::SBB_REQUEST]);
    frame.extend_from_slice(&body);
    match send_raw(server.local_addr(), &frame).unwrap() {
        Message::Error { code, message } => {
            assert_eq!(code, ErrorCode::Malformed);
            assert!(message.contains("duplicate"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
    let mut wrong_version = encode(&Message::SbbRequest(make_request(Mode::Retrieval, None)));
    wrong_version[4] = 99;
    assert!(matches!(
        send_raw(server.local_addr(), &wrong_version).unwrap(),
        Message::Error { code: ErrorCode::VersionMismatch, .. }
    ));
    let unexpected = encode(&Message::Blinded(vec![]));
    assert!(matches!(
        send_raw(server.local_addr(), &unexpected).unwrap(),
        Message::Error { code: ErrorCode::Unexpected, .. }
    ));
    // the server keeps serving after bad sessions
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    assert!(query(server.local_addr(), &PerceptualHash::ZERO, None, Mode::Retrieval, 1, &mut rng).unwrap().matched);
    server.shutdown();
}

#[test]
fn concurrent_identical_requests_see_identical_buckets() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let db = random_db(2000, &mut rng);
    let server = Arc::new(start(db.clone(), 3, 3));
    let p = EmbeddingParams::new(9, 0.0, 3).unwrap();
    let q = db[10];
    let emb = emb_lsh(&q, &p, &mut rng);
    let addr = server.local_addr();
    let outs: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let emb = emb.clone();
                s.spawn(move || {
                    query(addr, &q, Some(&emb), Mode::Retrieval, 1, &mut ChaCha8Rng::seed_from_u64(i)).unwrap()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let expected = sim_lsh(&emb, &db, 3).len();
    for o in &outs {
        assert_eq!(o.bucket_size, expected);
        assert_eq!(o.matches, vec![q]);
    }
    Arc::try_unwrap(server).ok().unwrap().shutdown();
}

#[test]
fn empty_db_and_exact_hash() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let server = start(Vec::new(), 3, 4);
    let q = PerceptualHash::from_words(rng.random());
    let p = EmbeddingParams::new(9, 0.0, 0).unwrap();
    let out = query(server.local_addr(), &q, Some(&emb_lsh(&q, &p, &mut rng)), Mode::Retrieval, 32, &mut rng).unwrap();
    assert!(!out.matched);
    assert_eq!(out.metrics.response_body_bytes, 4);
    let sssp = query(server.local_addr(), &q, None, Mode::Sssp, 32, &mut rng).unwrap();
    assert!(!sssp.matched);

    server.reload(Database::new(vec![q]));
    for k in [0, 4] {
        let p = EmbeddingParams::new(9, 0.0, k).unwrap();
        let emb = emb_lsh(&q, &p, &mut rng);
        assert!(query(server.local_addr(), &q, Some(&emb), Mode::Retrieval, 1, &mut rng).unwrap().matched);
        assert!(query(server.local_addr(), &q, Some(&emb), Mode::Sssp, 1, &mut rng).unwrap().matched);
    }
    server.shutdown();
}

#[test]
fn retrieval_and_sssp_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = SyntheticConfig { cluster_radius: 20, members_per_cluster: [1, 6], ..Default::default() };
    let db = generate_database(&shape, 1000).unwrap();
    let server = start(db.clone(), 3, 5);
    let p = EmbeddingParams::new(9, 0.05, 3).unwrap();
    let t = 32;
    let mut matched = 0;
    for _ in 0..200 {
        let q = if rng.random_bool(0.7) {
            let m = db[rng.random_range(0..db.len())];
            let w = rng.random_range(0..48);
            perturb(&m, w, &mut rng)
        } else {
            PerceptualHash::from_words(rng.random())
        };
        let emb = emb_lsh(&q, &p, &mut rng);
        let r = query(server.local_addr(), &q, Some(&emb), Mode::Retrieval, t, &mut rng).unwrap();
        let s = query(server.local_addr(), &q, Some(&emb), Mode::Sssp, t, &mut rng).unwrap();
        assert_eq!(r.matched, s.matched);
        assert_eq!(r.bucket_size, s.bucket_size);
        matched += usize::from(r.matched);
    }
    assert!(matched > 20 && matched < 180, "{matched}");
    server.shutdown();
}

#[test]
fn transcript_holds_only_bucket_members() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let db = random_db(5000, &mut rng);
    let server = start(db.clone(), 2, 6);
    let p = EmbeddingParams::new(9, 0.05, 2).unwrap();
    for _ in 0..20 {
        let q = db[rng.random_range(0..db.len())];
        let emb = emb_lsh(&q, &p, &mut rng);
        let frame = encode(&Message::SbbRequest(make_request(Mode::Retrieval, Some(&emb))));
        let Message::BucketResponse(sent) = send_raw(server.local_addr(), &frame).unwrap() else { panic!() };
        let bucket: Vec<_> = sim_lsh(&emb, &db, 2).hashes().copied().collect();
        assert_eq!(sent, bucket);
    }
    server.shutdown();
}

#[test]
fn metrics_add_up() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let db = random_db(100, &mut rng);
    let server = start(db.clone(), 3, 7);
    let out = query(server.local_addr(), &db[0], None, Mode::Sssp, 32, &mut rng).unwrap();
    assert!(out.matched);
    let m = &out.metrics;
    assert_eq!(m.phases.iter().map(|p| p.name).collect::<Vec<_>>(), vec!["offer", "oprf"]);
    assert_eq!(m.total_bytes(), m.phases.iter().map(|p| p.bytes_sent + p.bytes_received).sum::<usize>());
    // offer: count + per member (2 + 31 sketch bytes + 32 token bytes)
    assert_eq!(m.response_body_bytes, 4 + 100 * (2 + 31 + 32));
    assert!(m.phases.iter().all(|p| p.millis >= 0.0));
    server.shutdown();
}
