use std::collections::HashSet;
use std::sync::OnceLock;

use fedhome::data::{
    build_partition, load_csv, segment_windows, synthesize_streams, write_csv, Activity,
    Partition, PartitionSpec, Scheme, SensorStream, SynthSpec, OVERLAP, WINDOW_SECONDS,
};
use proptest::prelude::*;

fn stream_of(len: usize) -> SensorStream {
    let mut s = SensorStream::new(0, 200.0);
    s.push_segment(Activity::Walking, (0..len).map(|i| [i as f64; 6]));
    s
}

proptest! {
    #[test]
    fn window_count_and_offsets(len in 0usize..=2000) {
        let s = stream_of(len);
        let w = segment_windows(&s, WINDOW_SECONDS, OVERLAP).unwrap();
        let expected = if len < 200 { 0 } else { (len - 200) / 40 + 1 };
        prop_assert_eq!(w.len(), expected);
        for (i, win) in w.iter().enumerate() {
            prop_assert_eq!(win.start, 40 * i);
            prop_assert_eq!(win.records.len(), 200);
            prop_assert_eq!(win.records[0][0], (40 * i) as f64);
        }
    }
}

#[test]
fn published_window_examples() {
    let count = |n| segment_windows(&stream_of(n), WINDOW_SECONDS, OVERLAP).unwrap().len();
    assert_eq!(count(200), 1);
    assert_eq!(count(280), 3);
    assert_eq!(count(199), 0);
}

fn streams() -> &'static [SensorStream] {
    static STREAMS: OnceLock<Vec<SensorStream>> = OnceLock::new();
    STREAMS.get_or_init(|| synthesize_streams(&SynthSpec::default(), 5))
}

fn partition(scheme: Scheme) -> Partition {
    let spec = PartitionSpec {
        scheme,
        seed: 5,
        ..PartitionSpec::default()
    };
    build_partition(streams(), &spec).unwrap()
}

fn image_keys(p: &Partition, user: usize, test: bool) -> HashSet<Vec<u64>> {
    let sets = if test { &p.tests } else { &p.clients };
    sets.iter()
        .flat_map(|c| &c.samples)
        .filter(|s| s.user_id == user)
        .map(|s| s.image.data().iter().map(|v| v.to_bits()).collect())
        .collect()
}

#[test]
fn every_user_stream_covers_every_class() {
    for s in streams() {
        let present: HashSet<Activity> = s.segments.iter().map(|g| g.activity).collect();
        assert_eq!(present.len(), 10, "user {}", s.user_id);
    }
}

#[test]
fn imbalanced_partition_contract() {
    let p = partition(Scheme::Imbalanced);
    assert_eq!(p.clients.len(), 30);
    let mut uniform = 0;
    for c in &p.clients {
        let h = c.histogram();
        assert_eq!(c.len(), 480);
        assert!(h.iter().all(|&n| n >= 1));
        if h.iter().all(|&n| n == 48) {
            uniform += 1;
        }
        for s in &c.samples {
            assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
    assert!(uniform <= 1);
    assert_eq!(p.tests.len(), 30);
    for t in &p.tests {
        assert_eq!(t.len(), 160);
        assert_eq!(t.histogram(), [16; 10]);
    }
    for user in 0..30 {
        let train = image_keys(&p, user, false);
        let test = image_keys(&p, user, true);
        assert_eq!(train.len(), 480, "duplicate training windows for user {user}");
        assert!(train.is_disjoint(&test), "user {user}");
    }
    let again = partition(Scheme::Imbalanced);
    assert_eq!(again.manifest(), p.manifest());
    assert_eq!(again.clients, p.clients);
    let other = build_partition(
        streams(),
        &PartitionSpec {
            seed: 6,
            ..PartitionSpec::default()
        },
    )
    .unwrap();
    assert_ne!(other.manifest().clients, p.manifest().clients);
}

#[test]
fn balanced_partition_has_48_per_class() {
    let p = partition(Scheme::Balanced);
    for c in &p.clients {
        assert_eq!(c.histogram(), [48; 10]);
    }
}

#[test]
fn home_partition_groups_users() {
    let p = partition(Scheme::Home);
    assert_eq!(p.clients.len(), 10);
    let mut seen = Vec::new();
    for (c, members) in p.clients.iter().zip(&p.homes) {
        assert!((1..=5).contains(&members.len()));
        assert_eq!(&c.users, members);
        assert_eq!(c.len(), 480 * members.len());
        seen.extend(members.iter().copied());
    }
    seen.sort_unstable();
    assert_eq!(seen, (0..30).collect::<Vec<_>>());
    let imbalanced = partition(Scheme::Imbalanced);
    for (c, members) in p.clients.iter().zip(&p.homes) {
        let mut h = [0; 10];
        for &u in members {
            for (a, b) in h.iter_mut().zip(imbalanced.clients[u].histogram()) {
                *a += b;
            }
        }
        assert_eq!(c.histogram(), h);
    }
}

#[test]
fn synthetic_stream_survives_csv() {
    let spec = SynthSpec {
        users: 2,
        seconds_per_class: 3.0,
        ..SynthSpec::default()
    };
    let dir = tempfile::tempdir().unwrap();
    for s in synthesize_streams(&spec, 3) {
        let path = dir.path().join(format!("u{}.csv", s.user_id));
        write_csv(&s, &path).unwrap();
        assert_eq!(load_csv(&path).unwrap(), s);
    }
}

#[test]
fn insufficient_pool_reports_a_shortfall() {
    let spec = SynthSpec {
        users: 2,
        seconds_per_class: 4.0,
        ..SynthSpec::default()
    };
    let err = build_partition(
        &synthesize_streams(&spec, 1),
        &PartitionSpec {
            num_users: 2,
            ..PartitionSpec::default()
        },
    )
    .unwrap_err();
    let text = err.to_string();
    assert!(text.contains("user 0") || text.contains("user"), "{text}");
}
