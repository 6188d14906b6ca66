use seedlm::codec::{compress_block, Candidates, PseudoInverseCache, SearchOptions};
use seedlm::explorer::{
    enumerate_configs, evaluate_blocks, evaluate_config, gaussian_blocks, search, to_csv,
    SearchLimits,
};
use seedlm::{BlockConfig, Budget, CycleCache};

#[test]
fn nested_candidate_sets_never_lose() {
    let config = BlockConfig::new(8, 3, 12).unwrap();
    let cycle = CycleCache::for_length(12).unwrap();
    let cache = PseudoInverseCache::build(config, &cycle).unwrap();
    let small = SearchOptions {
        candidates: Candidates::List((1..=255).collect()),
        ..Default::default()
    };
    let middle = SearchOptions {
        candidates: Candidates::List((1..=1023).collect()),
        ..Default::default()
    };
    let full = SearchOptions::default();
    for w in gaussian_blocks(8, 200, 21) {
        let (_, e_small) = compress_block(&w, &cache, &small).unwrap();
        let (_, e_mid) = compress_block(&w, &cache, &middle).unwrap();
        let (_, e_full) = compress_block(&w, &cache, &full).unwrap();
        assert!(e_full <= e_mid && e_mid <= e_small);
    }
}

#[test]
fn longer_register_measured_independently() {
    // Different K means different generators, so only the averages are compared.
    let short = evaluate_config(BlockConfig::new(8, 3, 8).unwrap(), 300, 4).unwrap();
    let long = evaluate_config(BlockConfig::new(8, 3, 12).unwrap(), 300, 4).unwrap();
    eprintln!(
        "K=8: {:.5} +/- {:.5}   K=12: {:.5} +/- {:.5}",
        short.mean_relative_error, short.std_error, long.mean_relative_error, long.std_error
    );
    assert!(long.mean_relative_error < short.mean_relative_error);
}

#[test]
fn single_seed_baseline_is_much_worse() {
    let config = BlockConfig::new(8, 3, 10).unwrap();
    let cycle = CycleCache::for_length(10).unwrap();
    let cache = PseudoInverseCache::build(config, &cycle).unwrap();
    let blocks = gaussian_blocks(8, 300, 2);
    let full = evaluate_blocks(&blocks, &cache, &SearchOptions::default()).unwrap();
    let one = SearchOptions {
        candidates: Candidates::List(vec![17]),
        ..Default::default()
    };
    let single = evaluate_blocks(&blocks, &cache, &one).unwrap();
    assert!(full.mean_relative_error + 2.0 * full.std_error < single.mean_relative_error);
}

#[test]
fn search_is_reproducible() {
    let limits = SearchLimits { max_c: 7, max_k: 12 };
    let m = Budget::from_integer(4);
    let a = search(m, limits, 60, 7).unwrap();
    let b = search(m, limits, 60, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(to_csv(&a), to_csv(&b));
    assert_eq!(a.len(), enumerate_configs(m, limits).unwrap().len());
}

#[test]
fn four_bit_grid_favours_the_preset() {
    let limits = SearchLimits { max_c: 8, max_k: 16 };
    let ranked = search(Budget::from_integer(4), limits, 200, 1).unwrap();
    for p in &ranked {
        eprintln!(
            "C={} P={} K={}  {:.5} +/- {:.5}",
            p.config.block_size(),
            p.config.latent_dim(),
            p.config.seed_bits(),
            p.mean_relative_error,
            p.std_error
        );
    }
    let top = &ranked[0];
    let preset = ranked.iter().find(|p| p.config == BlockConfig::M4).unwrap();
    assert!(
        preset.mean_relative_error - top.mean_relative_error <= 2.0 * preset.std_error.max(top.std_error),
        "preset {:.5} vs winner {} at {:.5}",
        preset.mean_relative_error,
        top.config,
        top.mean_relative_error
    );
}
