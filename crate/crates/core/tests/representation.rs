mod common;

use common::{brute_force_volume, random_stream};
use evseg_core::events::{Event, EventStream, Polarity};
use evseg_core::repr::{
    read_volume, represent, table2_config, to_event_frame, voxelize, write_volume, ReprConfig, TimeNormalization,
    VolumeFile,
};
use evseg_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config_strategy() -> impl Strategy<Value = ReprConfig> {
    (0usize..10, 0usize..10, 1usize..9, 1usize..9, any::<bool>())
        .prop_filter("at least one bin", |(p, n, ..)| p + n > 0)
        .prop_map(|(p, n, h, w, joint)| ReprConfig {
            normalization: if joint { TimeNormalization::Joint } else { TimeNormalization::PerPolarity },
            ..ReprConfig::volume(p, n, h, w)
        })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn single_event_goes_to_first_bin() {
    let s = EventStream::new(4, 4, 0.0, 1.0, vec![Event::new(0.3, 2, 1, Polarity::Positive)]).unwrap();
    let v = voxelize(&s, &ReprConfig::volume(2, 0, 4, 4)).unwrap();
    assert_eq!(v.get(0, 1, 2), 1.0);
    assert_eq!(v.sum(), 1.0);
}

#[test]
fn events_at_bin_centres_fill_one_bin_each() {
    let evs = vec![
        Event::new(0.0, 0, 0, Polarity::Positive),
        Event::new(0.5, 1, 0, Polarity::Positive),
        Event::new(1.0, 2, 0, Polarity::Positive),
    ];
    let s = EventStream::new(3, 1, 0.0, 1.0, evs).unwrap();
    let v = voxelize(&s, &ReprConfig::volume(3, 0, 1, 3)).unwrap();
    for b in 0..3 {
        for x in 0..3 {
            assert_eq!(v.get(b, 0, x), if b == x { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn frame_counts_per_polarity() {
    let mut evs: Vec<Event> = (0..5).map(|i| Event::new(i as f64 * 0.1, 1, 1, Polarity::Positive)).collect();
    evs.extend((0..3).map(|i| Event::new(0.6 + i as f64 * 0.1, 1, 1, Polarity::Negative)));
    let s = EventStream::new(2, 2, 0.0, 1.0, evs).unwrap();
    let f = to_event_frame(&s, &table2_config("P+N", 2, 2).unwrap()).unwrap();
    assert_eq!((f.get(0, 1, 1), f.get(1, 1, 1)), (5.0, 3.0));
    let p = to_event_frame(&s, &table2_config("P", 2, 2).unwrap()).unwrap();
    assert_eq!(p.channels(), 1);
    assert_eq!(p.get(0, 1, 1), 5.0);
    assert_eq!(p.dropped(), 3);
    let b1 = represent(&s, &table2_config("B1", 2, 2).unwrap()).unwrap();
    assert_eq!(b1.get(0, 1, 1), 8.0);
    let empty = to_event_frame(&EventStream::empty(2, 2, 0.0, 1.0).unwrap(), &table2_config("P+N", 2, 2).unwrap()).unwrap();
    assert!(empty.data().iter().all(|&v| v == 0.0));
}

#[test]
fn table2_channel_counts() {
    let ch: Vec<usize> = ["B1", "B2", "B18", "P", "P+N"]
        .iter()
        .map(|n| table2_config(n, 8, 8).unwrap().channels())
        .collect();
    assert_eq!(ch, vec![1, 2, 18, 1, 2]);
    match table2_config("B3", 8, 8) {
        Err(Error::Config(msg)) => assert!(msg.contains("B18") && msg.contains("P+N")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn out_of_bounds_events_are_rejected() {
    let s = EventStream::new(8, 8, 0.0, 1.0, vec![Event::new(0.5, 7, 7, Polarity::Positive)]).unwrap();
    assert!(matches!(voxelize(&s, &ReprConfig::volume(2, 2, 4, 4)), Err(Error::Validation(_))));
}

#[test]
fn thousand_random_streams_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..200 {
        let s = random_stream(&mut rng, 6, 5, 2000);
        let cfg = match i % 3 {
            0 => ReprConfig::volume(1, 1, 5, 6),
            1 => ReprConfig::volume(9, 9, 5, 6),
            _ => ReprConfig::volume(4, 2, 5, 6),
        };
        let v = voxelize(&s, &cfg).unwrap();
        assert!(max_diff(v.data(), &brute_force_volume(&s, &cfg)) <= 1e-12);
        assert!((v.sum() - s.len() as f64).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn voxelize_matches_oracle(seed in any::<u64>(), cfg in config_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stream(&mut rng, cfg.width as u32, cfg.height as u32, 300);
        let v = voxelize(&s, &cfg).unwrap();
        prop_assert!(max_diff(v.data(), &brute_force_volume(&s, &cfg)) <= 1e-12);
        prop_assert!(v.data().iter().all(|x| x.is_finite() && *x >= 0.0));
        let kept = s.events().iter().filter(|e| match e.p {
            Polarity::Positive => cfg.bins_pos > 0,
            Polarity::Negative => cfg.bins_neg > 0,
        }).count();
        prop_assert!((v.sum() - kept as f64).abs() <= 1e-9);
        prop_assert_eq!(v.dropped(), s.len() - kept);
    }

    #[test]
    fn each_event_touches_at_most_two_adjacent_bins(seed in any::<u64>(), bins in 2usize..12, t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s0 = random_stream(&mut rng, 1, 1, 0);
        let evs = vec![
            Event::new(s0.t_start(), 0, 0, Polarity::Positive),
            Event::new(s0.t_start() + t * (s0.t_end() - s0.t_start()), 0, 0, Polarity::Positive),
            Event::new(s0.t_end(), 0, 0, Polarity::Positive),
        ];
        // Probe the middle event alone by subtracting the two end events' volume.
        let full = EventStream::new(1, 1, s0.t_start(), s0.t_end(), evs.clone()).unwrap();
        let ends = EventStream::new(1, 1, s0.t_start(), s0.t_end(), vec![evs[0], evs[2]]).unwrap();
        let cfg = ReprConfig::volume(bins, 0, 1, 1);
        let a = voxelize(&full, &cfg).unwrap();
        let b = voxelize(&ends, &cfg).unwrap();
        let contrib: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        let nz: Vec<usize> = (0..bins).filter(|&i| contrib[i].abs() > 1e-12).collect();
        prop_assert!(nz.len() <= 2);
        if nz.len() == 2 {
            prop_assert_eq!(nz[1], nz[0] + 1);
        }
        prop_assert!((contrib.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn time_shift_leaves_volume_unchanged(seed in any::<u64>(), cfg in config_strategy(), dt in -100.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stream(&mut rng, cfg.width as u32, cfg.height as u32, 200);
        let a = voxelize(&s, &cfg).unwrap();
        let b = voxelize(&s.shifted(dt).unwrap(), &cfg).unwrap();
        prop_assert!(max_diff(a.data(), b.data()) <= 1e-9);
    }

    #[test]
    fn polarity_swap_swaps_blocks(seed in any::<u64>(), bins in 1usize..6, h in 1usize..6, w in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stream(&mut rng, w as u32, h as u32, 200);
        let cfg = ReprConfig::volume(bins, bins, h, w);
        let a = voxelize(&s, &cfg).unwrap();
        let b = voxelize(&s.flipped(), &cfg).unwrap();
        let block = bins * h * w;
        prop_assert_eq!(&a.data()[..block], &b.data()[block..]);
        prop_assert_eq!(&a.data()[block..], &b.data()[..block]);
    }

    #[test]
    fn volume_file_round_trips(seed in any::<u64>(), cfg in config_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stream(&mut rng, cfg.width as u32, cfg.height as u32, 100);
        let file = VolumeFile::from(&voxelize(&s, &cfg).unwrap());
        let mut bytes = Vec::new();
        write_volume(&file, &mut bytes).unwrap();
        let back = read_volume(&bytes[..]).unwrap();
        let mut again = Vec::new();
        write_volume(&back, &mut again).unwrap();
        prop_assert_eq!(back, file);
        prop_assert_eq!(again, bytes);
    }
}
