//! Hand-computed examples and independent recomputations.

mod common;

use approx::assert_relative_eq;
use spikefolio::config::RunConfig;
use spikefolio::linalg::Matrix;
use spikefolio::market_data::{align, build_state, load_csv, price_relatives};
use spikefolio::metrics::{backtest, ucrp_policy, BacktestReport, ConstantPolicy};
use spikefolio::pipeline;
use spikefolio::portfolio::RewardConfig;
use spikefolio::quantizer::{compare, quantize_network};
use spikefolio::seed::component_rng;
use spikefolio::snn::{forward, DecoderParams, LifLayerParams, SdpNetwork};
use spikefolio::stbp::{backward, grad_check, LogGrowthLoss, ParamId, SurrogateParams};

/// m=1, P=3, one hidden layer of 4, T=3, all parameters fixed by hand.
fn hand_net() -> SdpNetwork {
    let spec = common::tiny_spec(1, vec![4], 3);
    let mut net = SdpNetwork::init(&spec, 0).unwrap();
    net.layers[0] = LifLayerParams {
        weights: Matrix::from_fn(4, 15, |i, j| match (i + j) % 5 {
            0 => 0.45,
            1 => -0.2,
            2 => 0.3,
            3 => 0.05,
            _ => -0.35,
        }),
        bias: vec![0.1, -0.05, 0.0, 0.2],
        d_c: 0.5,
        d_v: 0.8,
        v_th: 0.5,
    };
    net.decoder = DecoderParams { weights: Matrix::from_vec(2, 4, vec![1.0, -0.5, 0.25, 2.0, -1.0, 0.5, 1.5, -0.75]).unwrap(), bias: vec![0.1, -0.1] };
    net
}

#[test]
fn hand_scripted_tiny_net_matches_transcription() {
    let net = hand_net();
    let state = [1.01, 1.03, 0.98, 0.3, 0.7];
    let oracle = common::naive::NaiveNet::from_network(&net, common::state_ranges(&common::tiny_spec(1, vec![4], 3)));
    let run = oracle.run(&state);
    let (action, trace) = forward(&net, &state, None).unwrap();
    for t in 0..3 {
        assert_eq!(trace.layers[0].spikes.row(t), run.o[0][t].as_slice());
        assert_eq!(trace.layers[0].voltages.row(t), run.v[0][t].as_slice());
        assert_eq!(trace.layers[0].currents.row(t), run.c[0][t].as_slice());
    }
    assert!(trace.layers[0].spikes.total() > 0.0);
    for (a, b) in action.as_slice().iter().zip(&run.action) {
        assert_relative_eq!(*a, *b, max_relative = 1e-14);
    }
}

#[test]
fn hand_net_backward_matches_unrolled_graph() {
    let net = hand_net();
    let state = [1.01, 1.03, 0.98, 0.3, 0.7];
    let sg = SurrogateParams::default();
    let g = [0.7, -1.3];
    let (_, trace) = forward(&net, &state, None).unwrap();
    let grads = backward(&net, &trace, &g, &sg).unwrap();
    let oracle = common::naive::NaiveNet::from_network(&net, common::state_ranges(&common::tiny_spec(1, vec![4], 3)));
    let (tape, nodes, loss) = common::tape::unroll(&oracle, &oracle.run(&state).input, &g, sg.amplitude, sg.window);
    let adj = tape.grad(loss);
    let (w, b) = &nodes.layers[0];
    for i in 0..4 {
        for j in 0..15 {
            assert!((grads.layers[0].weights.get(i, j) - adj[w[i][j]]).abs() <= 1e-10);
        }
        assert!((grads.layers[0].bias[i] - adj[b[i]]).abs() <= 1e-10);
    }
}

#[test]
fn library_grad_check_agrees_on_decoder() {
    let mut rng = component_rng(17, "oracle-gradcheck");
    for _ in 0..10 {
        let spec = common::tiny_spec(2, vec![6], 4);
        let net = common::random_net(&spec, &mut rng);
        let state = common::random_state(&spec, &mut rng);
        let loss = LogGrowthLoss { relatives: vec![1.0, 1.04, 0.97] };
        let report = grad_check(&net, &state, &loss, 1e-6, &ParamId::decoder_params(&net), &SurrogateParams::default()).unwrap();
        assert_eq!(report.flagged().count(), 0);
        assert!(report.max_decoder_error() < 1e-4);
    }
}

fn fixture_frame() -> spikefolio::market_data::MarketFrame {
    let dir = common::fixtures().join("market");
    let series: Vec<_> = ["BTC", "ETH", "XRP"].iter().map(|s| load_csv(&dir.join(format!("{s}.csv")), 1800).unwrap()).collect();
    align(&series, 100).unwrap()
}

#[test]
fn golden_ucrp_matches_direct_product() {
    let cfg = RunConfig::load(&common::fixtures().join("pipeline.toml")).unwrap();
    let frame = fixture_frame();
    let test = spikefolio::market_data::split(&frame, cfg.data.split_ratio).unwrap().backtest;
    let golden: BacktestReport =
        serde_json::from_str(&std::fs::read_to_string(common::fixtures().join("golden/ucrp.json")).unwrap()).unwrap();

    // Rebalance to 1/3 each period; the first trade comes from all cash.
    let c = cfg.reward.commission;
    let target = [0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
    let mut held: Vec<f64> = vec![1.0, 0.0, 0.0, 0.0];
    let mut value = 1.0;
    let mut curve = vec![1.0];
    for t in 0..test.len() - 1 {
        let y = price_relatives(&test, t + 1).unwrap().0;
        let turnover: f64 = (1..4).map(|i| (target[i] - held[i]).abs()).sum();
        let growth: f64 = (0..4).map(|i| target[i] * y[i]).sum();
        value *= (1.0 - c * turnover) * growth;
        held = (0..4).map(|i| target[i] * y[i] / growth).collect();
        curve.push(value);
    }
    assert_eq!(golden.equity.values.len(), curve.len());
    for (g, v) in golden.equity.values.iter().zip(&curve) {
        assert_relative_eq!(*g, *v, max_relative = 1e-12);
    }
}

#[test]
fn best_stock_golden_holds_the_best_closer() {
    let golden: BacktestReport =
        serde_json::from_str(&std::fs::read_to_string(common::fixtures().join("golden/best_stock.json")).unwrap()).unwrap();
    let cfg = RunConfig::load(&common::fixtures().join("pipeline.toml")).unwrap();
    let test = spikefolio::market_data::split(&fixture_frame(), cfg.data.split_ratio).unwrap().backtest;
    let last = test.len() - 1;
    let growth: Vec<f64> = (0..3).map(|a| test.closes.get(a, last) / test.closes.get(a, 0)).collect();
    let best = (0..3).max_by(|&a, &b| growth[a].total_cmp(&growth[b])).unwrap();
    assert!(golden.weights.iter().all(|row| row.weights[best + 1] == 1.0));
    // One buy out of cash, then the drifted weights already equal the target.
    assert_relative_eq!(golden.fapv, (1.0 - cfg.reward.commission) * growth[best], max_relative = 1e-12);
}

#[test]
fn constant_price_ucrp_is_flat() {
    let flat = common::rising_falling(30, 60).into_iter().map(|mut s| {
        for c in &mut s.candles {
            (c.open, c.high, c.low, c.close) = (5.0, 5.0, 5.0, 5.0);
        }
        s
    });
    let frame = align(&flat.collect::<Vec<_>>(), 10).unwrap();
    let free = RewardConfig { commission: 0.0 };
    let report = backtest(&mut ucrp_policy(2), &frame, &free, 0.0).unwrap();
    assert_eq!(report.fapv, 1.0);
    assert_eq!(report.mdd, 0.0);
    assert_eq!(report.sharpe, None);
}

#[test]
fn full_weight_on_one_asset_tracks_its_close() {
    let frame = fixture_frame();
    let free = RewardConfig { commission: 0.0 };
    for a in 0..3 {
        let mut weights = vec![0.0; 4];
        weights[a + 1] = 1.0;
        let mut policy = ConstantPolicy { name: "hold".into(), weights };
        let report = backtest(&mut policy, &frame, &free, 0.0).unwrap();
        let expected = frame.closes.get(a, frame.len() - 1) / frame.closes.get(a, 0);
        assert_relative_eq!(report.fapv, expected, max_relative = 1e-12);
    }
}

#[test]
fn exact_integer_net_has_zero_divergence() {
    let mut rng = component_rng(23, "oracle-integer");
    let spec = common::tiny_spec(2, vec![5, 4], 5);
    let mut net = common::random_net(&spec, &mut rng);
    for layer in &mut net.layers {
        let (r, c) = layer.weights.shape();
        layer.weights = Matrix::from_fn(r, c, |i, j| ((i * 7 + j * 3) % 255) as f64 - 127.0);
        layer.weights.set(0, 0, 127.0);
        layer.bias.iter_mut().for_each(|b| *b = b.round() * 10.0);
        layer.v_th = 60.0;
    }
    let q = quantize_network(&net, 127).unwrap();
    assert!(q.layers.iter().all(|l| l.ratio == 1.0));
    let states: Vec<Vec<f64>> = (0..20).map(|_| common::random_state(&spec, &mut rng)).collect();
    let report = compare(&net, &q, &states).unwrap();
    assert_eq!(report.max_action_l1, 0.0);
    assert!(report.max_spike_hamming.iter().all(|h| *h == 0));
}

#[test]
fn default_net_quantization_gap_is_small() {
    let mut rng = component_rng(29, "oracle-default-quantize");
    let spec = spikefolio::snn::NetworkSpec::default();
    let net = SdpNetwork::init(&spec, 4).unwrap();
    let q = quantize_network(&net, 127).unwrap();
    let states: Vec<Vec<f64>> = (0..100).map(|_| common::random_state(&spec, &mut rng)).collect();
    let report = compare(&net, &q, &states).unwrap();
    assert_eq!(report.per_state.len(), 100);
    let mean = report.per_state.iter().map(|s| s.action_l1).sum::<f64>() / 100.0;
    assert_relative_eq!(report.mean_action_l1, mean, max_relative = 1e-12);
    assert!(report.mean_action_l1 <= 0.05, "mean L1 gap {}", report.mean_action_l1);
}

#[test]
fn bench_states_cover_the_backtest() {
    let cfg = RunConfig::load(&common::fixtures().join("pipeline.toml")).unwrap();
    let frame = fixture_frame();
    let net = SdpNetwork::init(&cfg.network.spec(3), 1).unwrap();
    let states = pipeline::bench_states(&net, &frame).unwrap();
    assert_eq!(states.len(), frame.len());
    assert_eq!(states[0], build_state(&frame, 0, &[0.25; 4], 1).unwrap().0);
}
