//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use rlsum::corpus::{tokenize, LengthSpec, PromptedInput, TokenizedText};
use rlsum::eval::{lcs_length, rouge_l, rouge_l_single, rouge_n, rouge_n_single, truncate_chars, Protocol, RougeScore};
use rlsum::perturb::{generate_records, make_reconstruction_pair, replay, PerturbConfig, PerturbOp};
use rlsum::policy::{
    beam_search, filter_patterns, greedy_summary, sample_summary, select_best, ConditionalGenerator, PatternConfig,
    SummaryCandidate, Termination, TokenId, EOS,
};
use rlsum::rewards::{
    fluency_from_perplexity, length_reward, perplexity_from_logprobs, sequence_reward, similarity,
    total_reward, usefulness_from_quality, RewardBreakdown, RewardConfig, RewardModel,
};
use rlsum::rl::{
    collect_rollouts, msl_slots, msl_train_step, policy_gradient, score_coupled, score_independent,
    self_critical_gradient, self_critical_loss, single_train_step, step_seed, AdamW,
};
use rlsum::rng::Rng;
use rlsum::toy::{
    run_experiment, synthetic_corpus, BigramLm, ExperimentConfig, HashedEmbedder, ToyConfig, ToyGenerator, UniformLm,
};

type Check = Result<String, String>;

/// Name, runtime budget in seconds, check.
type Criterion = (&'static str, u64, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- rewards

const E_INV: f64 = 0.367_879_441_171_442_33;
const HALF_POW_03: f64 = 0.812_252_396_356_235_6;

fn reward_math() -> Check {
    let cfg = RewardConfig::<f64>::default();
    let mut rng = Rng::new(0x5eed);
    let mut oracle_sets = 0;
    let mut max_rel = 0.0f64;
    for i in 0..10_000 {
        // content
        let dim = 1 + rng.below(8);
        let mut a = random_vector(&mut rng, dim);
        let b = random_vector(&mut rng, dim);
        if i % 20 == 0 {
            a.iter_mut().for_each(|x| *x = 0.0);
        }
        let c = similarity(&a, &b).map_err(|e| e.to_string())?;
        ensure((0.0..=1.0).contains(&c), || format!("content {c} out of range"))?;
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
        ensure((c - (cos + 1.0) / 2.0).abs() < 1e-12, || format!("content {c} vs oracle"))?;

        // fluency
        let n = 1 + rng.below(10);
        let lps: Vec<f64> = (0..n).map(|_| -8.0 * rng.unit_f64()).collect();
        let ppl = perplexity_from_logprobs(&lps);
        ensure(ppl >= 1.0, || format!("perplexity {ppl} < 1"))?;
        let f = fluency_from_perplexity(ppl, cfg.sigma_f);
        ensure(f > 0.0 && f <= 1.0, || format!("fluency {f} out of range"))?;
        let mean = lps.iter().sum::<f64>() / n as f64;
        ensure(rel_err(f, (-(-mean).exp() / 1000.0).exp()) < 1e-12, || "fluency oracle".into())?;
        let ppl2 = ppl * (1.0 + rng.unit_f64()) + 1e-3;
        ensure(fluency_from_perplexity(ppl2, cfg.sigma_f) < f, || "fluency not decreasing".into())?;
        ensure(fluency_from_perplexity(ppl, 1e300) == 1.0, || "sigma_f limit".into())?;

        // length
        let target = 1 + rng.below(20);
        let actual = rng.below(41);
        let l = length_reward(actual, target, cfg.sigma_l);
        ensure(l > 0.0 && l <= 1.0, || format!("length {l} out of range"))?;
        let d = actual.abs_diff(target);
        ensure(length_reward(target + d + 1, target, cfg.sigma_l) < l, || "length not decreasing".into())?;
        if target >= d {
            ensure(length_reward(target - d, target, cfg.sigma_l) == length_reward(target + d, target, cfg.sigma_l), || {
                "length not symmetric".into()
            })?;
        }

        // quality and usefulness
        let q = c * f;
        ensure((0.0..=1.0).contains(&q), || "quality out of range".into())?;
        let q1 = rng.unit_f64();
        let q2 = rng.unit_f64();
        let other_len = rng.below(20);
        let u12 = usefulness_from_quality(q1, q2, other_len, target, &cfg);
        let u21 = usefulness_from_quality(q2, q1, other_len, target, &cfg);
        ensure((0.0..=1.0).contains(&u12), || format!("usefulness {u12} out of range"))?;
        if q1 != q2 {
            ensure(u12 == 0.0 || u21 == 0.0, || "usefulness not antisymmetric".into())?;
        }
        ensure((u12 > 0.0) == (q2 > q1), || "usefulness gate".into())?;
        let q3 = q2 + (1.0 - q2) * rng.unit_f64();
        ensure(usefulness_from_quality(q1, q3, other_len, target, &cfg) >= u12, || {
            "usefulness decreasing in gap".into()
        })?;
        let zero_alpha = RewardConfig { alpha: 0.0, ..cfg.clone() };
        if q2 > q1 {
            ensure(
                usefulness_from_quality(q1, q2, other_len, target, &zero_alpha) == length_reward(other_len, target, 10.0),
                || "alpha = 0 gap factor".into(),
            )?;
        }

        // breakdown identity
        let qr = 0.02 * rng.unit_f64();
        let bd = RewardBreakdown::new(c, f, l, qr);
        ensure(bd.total == c + f + l + qr, || "breakdown identity".into())?;

        // full set reward against a straight-line recomputation
        if i % 10 == 0 {
            oracle_sets += 1;
            let r = set_oracle(&mut rng, i)?;
            max_rel = max_rel.max(r);
        }
    }
    let anchors = [
        ("fluency(PPL=sigma_F)", fluency_from_perplexity(1000.0, 1000.0), E_INV),
        ("length(|d|=sigma_L)", length_reward(20, 10, 10.0), E_INV),
        ("length(|d|=sigma_L) under", length_reward(0, 10, 10.0), E_INV),
        ("usefulness(gap=0.5)", usefulness_from_quality(0.2, 0.7, 10, 10, &cfg), HALF_POW_03),
    ];
    for (name, got, want) in anchors {
        ensure((got - want).abs() <= 1e-9, || format!("anchor {name}: {got} vs {want}"))?;
    }
    Ok(format!(
        "10000 inputs, {oracle_sets} three-summary sets (max rel err {max_rel:.1e}), anchors within 1e-9"
    ))
}

/// Three summaries with table embeddings and log-probabilities; compares the
/// library's set reward with a direct recomputation, and the uncoupled case
/// with independent per-length rewards.
fn set_oracle(rng: &mut Rng, i: usize) -> Result<f64, String> {
    let dim = 2 + rng.below(6);
    let mut emb = TableEmbedder::default();
    let mut lm = TableLm::default();
    let text = toks(&format!("text{i}"));
    emb.insert(&text, random_vector(rng, dim));
    let mut ys = Vec::new();
    for k in 0..3 {
        let len = 1 + rng.below(12);
        let y: Vec<String> = (0..len).map(|j| format!("s{k}w{j}")).collect();
        for w in &y {
            lm.table.insert(w.clone(), -6.0 * rng.unit_f64());
        }
        emb.insert(&y, random_vector(rng, dim));
        ys.push(y);
    }
    let targets = [8usize, 10, 13];
    let lambda = if i.is_multiple_of(20) { 0.01 } else { rng.unit_f64() };
    let cfg = RewardConfig {
        lambda,
        ..RewardConfig::default()
    };
    let model = RewardModel::new(cfg.clone(), &emb, &lm);
    let set: Vec<(&[String], usize)> = ys.iter().zip(targets).map(|(y, l)| (y.as_slice(), l)).collect();
    let got = total_reward(&set, &text, &model).map_err(|e| e.to_string())?;

    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let ev = |y: &[String]| emb.table[&y.join(" ")].clone();
    let te = ev(&text);
    let rc: Vec<f64> = ys.iter().map(|y| (cos(&ev(y), &te) + 1.0) / 2.0).collect();
    let rf: Vec<f64> = ys
        .iter()
        .map(|y| {
            let m = y.iter().map(|w| lm.table[w]).sum::<f64>() / y.len() as f64;
            (-(-m).exp() / 1000.0).exp()
        })
        .collect();
    let rl: Vec<f64> = ys
        .iter()
        .zip(targets)
        .map(|(y, l)| (-(y.len() as f64 - l as f64).abs() / 10.0).exp())
        .collect();
    let mut want_total = 0.0;
    let mut max_rel = 0.0f64;
    for k in 0..3 {
        let mut rq = 0.0;
        for j in 0..3 {
            if j == k {
                continue;
            }
            let gap = rc[j] * rf[j] - rc[k] * rf[k];
            if gap > 0.0 {
                let u = gap.powf(0.3) * (-(ys[j].len() as f64 - targets[k] as f64).abs() / 10.0).exp();
                rq += u * (cos(&ev(&ys[k]), &ev(&ys[j])) + 1.0) / 2.0;
            }
        }
        rq *= lambda;
        let b = got.breakdowns[k];
        ensure(b.quality >= 0.0 && b.quality <= lambda * 2.0, || "coupling out of range".into())?;
        ensure(b.total == b.content + b.fluency + b.length + b.quality, || "set breakdown identity".into())?;
        for (name, g, w) in [("content", b.content, rc[k]), ("fluency", b.fluency, rf[k]), ("length", b.length, rl[k]), ("quality", b.quality, rq)] {
            let e = rel_err(g, w);
            max_rel = max_rel.max(e);
            ensure(e <= 1e-12, || format!("{name} {g} vs oracle {w}"))?;
        }
        want_total += rc[k] + rf[k] + rl[k] + rq;
    }
    let e = rel_err(got.total, want_total);
    ensure(e <= 1e-12, || format!("total {} vs oracle {want_total}", got.total))?;

    let uncoupled = RewardModel::new(RewardConfig { lambda: 0.0, ..cfg.clone() }, &emb, &lm);
    let sum0 = total_reward(&set, &text, &uncoupled).map_err(|e| e.to_string())?.total;
    let mut independent = 0.0;
    for (y, l) in &set {
        independent += sequence_reward(y, &text, *l, &cfg, &emb, &lm).map_err(|e| e.to_string())?.total;
    }
    ensure(sum0 == independent, || format!("lambda = 0 set reward {sum0} vs {independent}"))?;
    Ok(max_rel.max(e))
}

// ---------------------------------------------------------------- gradient

fn gradient_check() -> Check {
    let vocab_text = tokenize("alpha beta").map_err(|e| e.to_string())?;
    let cfg = ToyConfig {
        bigram: false,
        max_remaining: 1,
    };
    let base = ToyGenerator::<f64>::from_corpus([&vocab_text], cfg);
    let n = base.parameters().len();
    ensure(n <= 10, || format!("{n} parameters"))?;
    let words = ["alpha", "beta"];
    let mut rng = Rng::new(77);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for ep in 0..100 {
        let mut gen = base.clone();
        for p in gen.parameters_mut() {
            *p = 2.0 * rng.unit_f64() - 1.0;
        }
        let body = TokenizedText::from_tokens(random_words(&mut rng, &words, 1, 5)).map_err(|e| e.to_string())?;
        let input = PromptedInput::new(1 + rng.below(3), body);
        let sampled = sample_summary(&gen, &input, 4, &mut rng).map_err(|e| e.to_string())?;
        let greedy = greedy_summary(&gen, &input, 4).map_err(|e| e.to_string())?;
        let r_s = 3.0 * rng.unit_f64();
        let r_g = if ep % 10 == 0 { r_s } else { 3.0 * rng.unit_f64() };
        let ctx = gen.prepare(&input).map_err(|e| e.to_string())?;
        let actions = sampled.actions();
        let surrogate = |g: &ToyGenerator<f64>| -> f64 {
            let c = g.prepare(&input).unwrap();
            let lp: f64 = g.score_logprob(&c, &actions).unwrap().iter().sum();
            -(r_s - r_g) * lp
        };
        let loss = self_critical_loss(&sampled, &greedy, r_s, r_g);
        ensure((loss - surrogate(&gen)).abs() < 1e-12, || "loss disagrees with rescoring".into())?;
        let mut grad = vec![0.0; n];
        self_critical_gradient(&gen, &ctx, &sampled, r_s, r_g, 1.0, &mut grad).map_err(|e| e.to_string())?;
        if r_s == r_g {
            ensure(grad.iter().all(|g| *g == 0.0), || "zero advantage, nonzero gradient".into())?;
        }
        let h = 1e-5;
        for k in 0..n {
            let mut plus = gen.clone();
            plus.parameters_mut()[k] += h;
            let mut minus = gen.clone();
            minus.parameters_mut()[k] -= h;
            let numeric = (surrogate(&plus) - surrogate(&minus)) / (2.0 * h);
            let scale = grad[k].abs().max(numeric.abs());
            if scale < 1e-7 {
                ensure((grad[k] - numeric).abs() < 1e-9, || format!("param {k}: {} vs {numeric}", grad[k]))?;
                continue;
            }
            let e = rel_err(grad[k], numeric);
            worst = worst.max(e);
            compared += 1;
            ensure(e <= 1e-4, || format!("episode {ep} param {k}: analytic {} numeric {numeric}", grad[k]))?;
        }
    }
    Ok(format!("{n} parameters, 100 episodes, {compared} components, max rel err {worst:.1e}"))
}

// ---------------------------------------------------------------- reductions

struct RlFixture {
    gen: ToyGenerator<f64>,
    texts: Vec<TokenizedText>,
    embedder: HashedEmbedder<f64>,
    lm: BigramLm<f64>,
}

fn rl_fixture(seed: u64) -> RlFixture {
    let texts = synthetic_corpus(64, seed);
    let mut gen = ToyGenerator::<f64>::from_corpus(&texts, ToyConfig::default());
    let mut rng = Rng::new(seed);
    for p in gen.parameters_mut() {
        *p = rng.unit_f64() - 0.5;
    }
    RlFixture {
        embedder: HashedEmbedder::new(16, seed).with_idf(&texts),
        lm: BigramLm::fit(&texts, 0.1),
        gen,
        texts,
    }
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn reduction_identities() -> Check {
    let lengths = [LengthSpec::Absolute(4), LengthSpec::Absolute(6), LengthSpec::Absolute(8)];
    let mut changed = 0;
    for trial in 0..20u64 {
        let fx = rl_fixture(trial + 1);
        let batch = &fx.texts[..8];
        let cfg = RewardConfig { lambda: 0.0, ..RewardConfig::default() };
        let model = RewardModel::new(cfg.clone(), &fx.embedder, &fx.lm);
        let n = fx.gen.parameters().len();

        // coupled step with lambda = 0 versus per-length uncoupled gradients
        let ss = step_seed(trial, 3);
        let rollouts = collect_rollouts(&fx.gen, batch, &msl_slots(batch, &lengths), &cfg, ss).map_err(|e| e.to_string())?;
        let scored = score_coupled(batch, &rollouts, &model).map_err(|e| e.to_string())?;
        let g_msl = policy_gradient(&fx.gen, batch, &rollouts, &scored).map_err(|e| e.to_string())?;
        let mut g_sum: Option<Vec<f64>> = None;
        for j in 0..lengths.len() {
            let sub: Vec<_> = rollouts.iter().filter(|r| r.slot.length == j).cloned().collect();
            let s = score_independent(batch, &sub, &model).map_err(|e| e.to_string())?;
            let g = policy_gradient(&fx.gen, batch, &sub, &s).map_err(|e| e.to_string())?;
            match g_sum.as_mut() {
                None => g_sum = Some(g),
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, x)| *a += *x),
            }
        }
        let g_sum = g_sum.expect("three lengths");
        ensure(bits(&g_msl) == bits(&g_sum), || format!("trial {trial}: gradients differ"))?;

        let mut via_msl = fx.gen.clone();
        let mut opt_a = AdamW::new(n, 0.01, 0.01);
        let report = msl_train_step(&mut via_msl, &mut opt_a, batch, &lengths, &model, 3, trial).map_err(|e| e.to_string())?;
        let mut via_single = fx.gen.clone();
        let mut opt_b = AdamW::new(n, 0.01, 0.01);
        opt_b.step(via_single.parameters_mut(), &g_sum);
        ensure(bits(via_msl.parameters()) == bits(via_single.parameters()), || {
            format!("trial {trial}: lambda = 0 update differs from per-length updates")
        })?;
        if report.updated {
            changed += 1;
        }

        // a single length: coupled step equals the single-length step
        for l in [LengthSpec::Absolute(5), LengthSpec::Ratio(0.5)] {
            let model = RewardModel::new(RewardConfig::default(), &fx.embedder, &fx.lm);
            let mut a = fx.gen.clone();
            let mut b = fx.gen.clone();
            let mut oa = AdamW::new(n, 0.01, 0.01);
            let mut ob = AdamW::new(n, 0.01, 0.01);
            let ra = msl_train_step(&mut a, &mut oa, batch, &[l], &model, 5, trial).map_err(|e| e.to_string())?;
            let rb = single_train_step(&mut b, &mut ob, batch, &[l], &model, 5, trial).map_err(|e| e.to_string())?;
            ensure(bits(a.parameters()) == bits(b.parameters()), || format!("trial {trial}: |L| = 1 parameters differ"))?;
            ensure(ra == rb, || format!("trial {trial}: |L| = 1 reports differ"))?;
        }
    }
    Ok(format!("20 trials bit-identical ({changed} with a nonzero update)"))
}

// ---------------------------------------------------------------- perturbation

fn perturbation_suite() -> Check {
    let vocab: Vec<String> = (0..400).map(|i| format!("v{i}")).collect();
    let vocab: Vec<&str> = vocab.iter().map(String::as_str).collect();
    let mut rng = Rng::new(2024);
    let texts: Vec<TokenizedText> = (0..10_000)
        .map(|_| TokenizedText::from_tokens(random_words(&mut rng, &vocab, 1, 60)).unwrap())
        .collect();
    let cfg = PerturbConfig::default();
    for (i, t) in texts.iter().enumerate() {
        let donor = &texts[(i + 1) % texts.len()];
        let mut r1 = Rng::new(i as u64);
        let mut r2 = Rng::new(i as u64);
        let rec = make_reconstruction_pair(t, donor, &cfg, &mut r1).map_err(|e| e.to_string())?;
        let again = make_reconstruction_pair(t, donor, &cfg, &mut r2).map_err(|e| e.to_string())?;
        ensure(rec == again, || format!("text {i}: not deterministic"))?;
        let n = t.len();
        let tenth = (n + 5) / 10; // half-up rounding of n / 10
        let [PerturbOp::Shuffle { positions: sp, sources }, PerturbOp::Drop { positions: dp }, PerturbOp::Add { inserts }] =
            rec.oplog.as_slice()
        else {
            return Err(format!("text {i}: unexpected oplog shape"));
        };
        ensure(sp.len() == tenth && dp.len() == tenth && inserts.len() == n, || {
            format!("text {i} (n={n}): counts {} {} {}", sp.len(), dp.len(), inserts.len())
        })?;
        let mut s1 = sp.clone();
        let mut s2 = sources.clone();
        s1.sort_unstable();
        s2.sort_unstable();
        ensure(s1 == s2, || "shuffle sources are not a permutation of positions".into())?;
        ensure(rec.perturbed.body().len() == n - tenth + n, || "body length".into())?;
        ensure(rec.perturbed.target_length() == n, || "prompt length".into())?;
        ensure(rec.perturbed.serialized().starts_with(&format!("{n}: ")), || "prompt prefix".into())?;
        ensure(inserts.iter().all(|(_, w)| donor.tokens().contains(w)), || "insert not from donor".into())?;
        ensure(replay(t.tokens(), &rec.oplog) == rec.perturbed.body().tokens(), || format!("text {i}: replay"))?;
        let shuffled = rec.oplog[0].apply(t.tokens());
        let mut a = shuffled.clone();
        let mut b = t.tokens().to_vec();
        a.sort();
        b.sort();
        ensure(a == b, || "shuffle changed the multiset".into())?;
    }
    let seeded = PerturbConfig { seed: 9, ..cfg.clone() };
    let a = generate_records(&texts, &seeded).map_err(|e| e.to_string())?;
    let b = generate_records(&texts, &seeded).map_err(|e| e.to_string())?;
    ensure(a == b, || "dataset not deterministic".into())?;
    ensure(a.len() == texts.len(), || "record count".into())?;
    let lines_a: Vec<String> = a.iter().map(|r| r.to_tsv_line()).collect();
    let other = generate_records(&texts, &PerturbConfig { seed: 10, ..cfg }).map_err(|e| e.to_string())?;
    ensure(other.iter().map(|r| r.to_tsv_line()).collect::<Vec<_>>() != lines_a, || "seed ignored".into())?;
    Ok("10000 texts: determinism, stage counts, prompts, replay; dataset determinism".into())
}

// ---------------------------------------------------------------- decoding

fn enumerate(gen: &HashedGenerator, input: &PromptedInput, max_len: usize) -> Vec<(Vec<TokenId>, Termination, f64)> {
    let ctx = gen.prepare(input).unwrap();
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    while let Some((prefix, score)) = stack.pop() {
        let dist = gen.next_token_distribution(&ctx, &prefix).unwrap();
        for (tok, p) in dist.iter().enumerate() {
            let s = score + p.ln();
            if tok as TokenId == EOS {
                out.push((prefix.clone(), Termination::Eos, s));
                continue;
            }
            let mut next = prefix.clone();
            next.push(tok as TokenId);
            if next.len() >= max_len {
                out.push((next, Termination::MaxLen, s));
            } else {
                stack.push((next, s));
            }
        }
    }
    out.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
    out
}

fn random_input(rng: &mut Rng) -> PromptedInput {
    let body = TokenizedText::from_tokens(random_words(rng, &["x", "y", "z", "w"], 1, 6)).unwrap();
    PromptedInput::new(1 + rng.below(6), body)
}

fn decoding_suite() -> Check {
    let mut rng = Rng::new(31337);
    for trial in 0..300u64 {
        let gen = HashedGenerator::new(3 + rng.below(10), trial, 0.5 + 4.0 * rng.unit_f64());
        let input = random_input(&mut rng);
        let m = 1 + rng.below(8);
        let beam = beam_search(&gen, &input, 1, m).map_err(|e| e.to_string())?;
        let greedy = greedy_summary(&gen, &input, m).map_err(|e| e.to_string())?;
        ensure(beam.len() == 1 && beam[0].ids == greedy.ids && beam[0].terminated_by == greedy.terminated_by, || {
            format!("trial {trial}: beam 1 differs from greedy")
        })?;
        let sampled = sample_summary(&gen, &input, m, &mut rng).map_err(|e| e.to_string())?;
        let ctx = gen.prepare(&input).unwrap();
        let rescored: f64 = gen.score_logprob(&ctx, &sampled.actions()).unwrap().iter().sum();
        ensure((rescored - sampled.total_logprob()).abs() < 1e-6, || "sampled log-prob mismatch".into())?;
    }
    let toy_texts = synthetic_corpus(20, 3);
    for trial in 0..100u64 {
        let mut gen = ToyGenerator::<f64>::from_corpus(&toy_texts, ToyConfig::default());
        let mut r = Rng::new(trial);
        for p in gen.parameters_mut() {
            *p = 3.0 * (r.unit_f64() - 0.5);
        }
        let t = &toy_texts[trial as usize % toy_texts.len()];
        let input = PromptedInput::new(2 + r.below(6), t.clone());
        let m = 1 + r.below(10);
        let beam = beam_search(&gen, &input, 1, m).map_err(|e| e.to_string())?;
        let greedy = greedy_summary(&gen, &input, m).map_err(|e| e.to_string())?;
        ensure(beam[0].ids == greedy.ids, || format!("toy trial {trial}: beam 1 differs from greedy"))?;
    }
    let mut exhaustive = 0;
    for trial in 0..60u64 {
        let gen = HashedGenerator::new(3, 1000 + trial, 2.0);
        let input = random_input(&mut rng);
        let m = 1 + (trial as usize % 5);
        let all = enumerate(&gen, &input, m);
        let beam = beam_search(&gen, &input, 1 << (m + 1), m).map_err(|e| e.to_string())?;
        ensure(beam.len() == all.len(), || format!("trial {trial}: {} beams vs {} sequences", beam.len(), all.len()))?;
        for (b, (ids, term, score)) in beam.iter().zip(&all) {
            ensure(&b.ids == ids && b.terminated_by == *term && (b.total_logprob() - score).abs() < 1e-12, || {
                format!("trial {trial}: beam order differs from enumeration")
            })?;
        }
        for k in [1usize, 2, 3] {
            let top = beam_search(&gen, &input, k, m).map_err(|e| e.to_string())?;
            ensure(top[0].total_logprob() <= all[0].2 + 1e-12, || "beam exceeds exhaustive optimum".into())?;
        }
        exhaustive += 1;
    }

    let patterns = PatternConfig::default();
    let endings = [
        "in", "at", "to", "on", "the", "'s", "of", "a", "for", "with", "is", "into", "by", "his", "her", "when", "and", "but",
    ];
    let days = ["sunday", "monday", "tuesday", "wednesday", "thursday", "friday", "saturday"];
    ensure(patterns.banned_endings.len() == 18 && endings.iter().all(|w| patterns.banned_endings.contains(*w)), || {
        "banned endings list".into()
    })?;
    ensure(patterns.banned_anywhere.len() == 7 && days.iter().all(|w| patterns.banned_anywhere.contains(*w)), || {
        "banned days list".into()
    })?;
    let mut pool: Vec<&str> = endings.iter().chain(&days).copied().collect();
    pool.extend(["pm", "confident", "talks", "israel", "peace", "vote"]);
    let embedder = HashedEmbedder::<f64>::new(16, 1);
    let lm = UniformLm::<f64>::new(50);
    let model = RewardModel::new(RewardConfig::default(), &embedder, &lm);
    for trial in 0..2000 {
        let tokens = random_words(&mut rng, &pool, 0, 8);
        let cand = candidate(&tokens);
        let once = filter_patterns(&cand, &patterns);
        ensure(filter_patterns(&once, &patterns) == once, || format!("trial {trial}: filter not idempotent"))?;
        ensure(once.tokens.iter().all(|w| !patterns.banned_anywhere.contains(w)), || "day survived".into())?;
        ensure(once.tokens.last().is_none_or(|w| !patterns.banned_endings.contains(w)), || "banned ending".into())?;
        ensure(once.token_logprobs.len() == once.tokens.len() + 1, || "log-probs out of step".into())?;
        let cands: Vec<_> = (0..4).map(|_| candidate(&random_words(&mut rng, &pool, 0, 8))).collect();
        let text = toks("pm confident talks israel peace vote");
        match select_best(&cands, &text, 4, &model, &patterns) {
            Ok(best) => {
                ensure(!best.is_empty(), || "empty selection".into())?;
                ensure(best.tokens.iter().all(|w| !patterns.banned_anywhere.contains(w)), || "selected day".into())?;
                ensure(!patterns.banned_endings.contains(best.tokens.last().unwrap()), || "selected ending".into())?;
            }
            Err(rlsum::policy::PolicyError::AllCandidatesEmpty) => {
                ensure(cands.iter().all(|c| filter_patterns(c, &patterns).is_empty()), || "spurious empty".into())?;
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    for w in endings {
        ensure(filter_patterns(&candidate(&toks(w)), &patterns).is_empty(), || format!("{w} not stripped"))?;
    }
    let ex = filter_patterns(&candidate(&toks("pm confident on monday")), &patterns);
    ensure(ex.tokens == toks("pm confident"), || format!("worked example gave {:?}", ex.tokens))?;
    Ok(format!("400 beam=1 checks, {exhaustive} exhaustive enumerations, 2000 filter/selection trials"))
}

fn candidate(tokens: &[String]) -> SummaryCandidate<f64> {
    SummaryCandidate {
        ids: (1..=tokens.len() as TokenId).collect(),
        tokens: tokens.to_vec(),
        token_logprobs: (0..=tokens.len()).map(|i| -0.1 * (i as f64 + 1.0)).collect(),
        terminated_by: Termination::Eos,
    }
}

// ---------------------------------------------------------------- metrics

fn brute_overlap(c: &[String], r: &[String], n: usize) -> (usize, usize, usize) {
    let grams = |t: &[String]| -> Vec<Vec<String>> {
        if t.len() < n {
            return Vec::new();
        }
        (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
    };
    let cg = grams(c);
    let rg = grams(r);
    let mut seen: Vec<&Vec<String>> = Vec::new();
    let mut overlap = 0;
    for g in &cg {
        if seen.contains(&g) {
            continue;
        }
        seen.push(g);
        let cc = cg.iter().filter(|x| *x == g).count();
        let rc = rg.iter().filter(|x| *x == g).count();
        overlap += cc.min(rc);
    }
    (overlap, cg.len(), rg.len())
}

fn lcs_table(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

fn score_from(overlap: usize, cand: usize, reference: usize) -> RougeScore<f64> {
    let p = if cand == 0 { 0.0 } else { overlap as f64 / cand as f64 };
    let r = if reference == 0 { 0.0 } else { overlap as f64 / reference as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    RougeScore { precision: p, recall: r, f1: f }
}

fn metric_oracle() -> Check {
    let vocab = ["a", "b", "c", "d", "e", "f", "g"];
    let mut rng = Rng::new(99);
    for i in 0..1000 {
        let c = random_words(&mut rng, &vocab, 0, 25);
        let refs: Vec<Vec<String>> = (0..1 + rng.below(4)).map(|_| random_words(&mut rng, &vocab, 1, 25)).collect();
        for n in 1..=4 {
            let mut best: Option<RougeScore<f64>> = None;
            for r in &refs {
                let (o, cn, rn) = brute_overlap(&c, r, n);
                let want = score_from(o, cn, rn);
                let got: RougeScore<f64> = rouge_n_single(&c, r, n);
                ensure(got == want, || format!("pair {i} n={n}: {got:?} vs {want:?}"))?;
                if best.is_none_or(|b| want.f1 > b.f1) {
                    best = Some(want);
                }
            }
            let got: RougeScore<f64> = rouge_n(&c, &refs, n);
            ensure(Some(got) == best, || format!("pair {i} n={n}: multi-reference max"))?;
        }
        for r in &refs {
            let l = lcs_table(&c, r);
            ensure(lcs_length(&c, r) == l, || format!("pair {i}: LCS"))?;
            let got: RougeScore<f64> = rouge_l_single(&c, r);
            ensure(got == score_from(l, c.len(), r.len()), || format!("pair {i}: rouge-L"))?;
            ensure((got.recall * r.len() as f64).round() as usize == l, || "recall identity".into())?;
        }
        if !c.is_empty() {
            let all: RougeScore<f64> = rouge_l(&c, std::slice::from_ref(&c));
            ensure(all.f1 == 1.0, || "self rouge-L".into())?;
            for n in 1..=c.len().min(4) {
                ensure(rouge_n::<f64, _>(&c, std::slice::from_ref(&c), n).f1 == 1.0, || "self rouge-N".into())?;
            }
        }
    }
    let words = ["israel", "peace", "talks", "resume", "in", "cairo", "officials", "said", "monday"];
    for i in 0..1000 {
        let refs: Vec<Vec<String>> = (0..1 + rng.below(4)).map(|_| random_words(&mut rng, &words, 3, 15)).collect();
        let mut c = random_words(&mut rng, &words, 12, 30);
        while c.join(" ").len() <= 75 {
            c.push(words[rng.below(words.len())].to_string());
        }
        let joined = c.join(" ");
        let cut = truncate_chars(&joined, 75);
        ensure(cut.chars().count() == 75, || "truncated length".into())?;
        let mut tail_changed: String = cut.clone();
        for _ in 0..1 + rng.below(6) {
            tail_changed.push_str(if rng.below(2) == 0 { " " } else { "" });
            tail_changed.push_str(words[rng.below(words.len())]);
        }
        let alt: Vec<String> = tail_changed.split_whitespace().map(str::to_string).collect();
        let a: [RougeScore<f64>; 3] = Protocol::DucRecall.rouge_triple(&c, &refs);
        let b: [RougeScore<f64>; 3] = Protocol::DucRecall.rouge_triple(&alt, &refs);
        ensure(a == b, || format!("case {i}: recall protocol depends on text past 75 characters"))?;
    }
    Ok("1000 random pairs exact (n = 1..4, LCS, multi-reference); 1000 truncation-invariance cases".into())
}

// ---------------------------------------------------------------- toy runs

fn toy_end_to_end() -> Check {
    let cfg = ExperimentConfig::default();
    let corpus = synthetic_corpus(cfg.corpus_size, cfg.seed);
    let vocab: std::collections::BTreeSet<&String> = corpus.iter().flat_map(|t| t.tokens()).collect();
    ensure(vocab.len() <= 300, || format!("synthetic vocabulary has {} words", vocab.len()))?;
    let r = run_experiment::<f64>(&cfg).map_err(|e| e.to_string())?;
    let last = r.rl.validation.last().ok_or("no validation")?;
    let start = r.initial.length;
    ensure(last.length >= 0.8 && last.length > start, || {
        format!("validation length reward {:.4} (step-0 {:.4})", last.length, start)
    })?;
    for l in &last.per_length {
        ensure(l.mean_abs_gap <= 1.5, || format!("length {}: mean gap {:.3}", l.length, l.mean_abs_gap))?;
    }
    let windows: Vec<f64> = r
        .rl
        .reports
        .chunks(100)
        .map(|w| w.iter().map(|s| s.mean_sampled).sum::<f64>() / w.len() as f64)
        .collect();
    let violations = windows.windows(2).filter(|w| w[1] < w[0]).count();
    ensure(violations <= 1, || format!("{violations} decreasing windows: {windows:.4?}"))?;
    let gaps: Vec<String> = last
        .per_length
        .iter()
        .map(|l| format!("l={} gap {:.2}", l.length, l.mean_abs_gap))
        .collect();
    Ok(format!(
        "{} sentences, vocab {}; R_L {:.4} (step-0 {:.4}); {}; window means {:.3?} ({violations} violations)",
        corpus.len(),
        vocab.len(),
        last.length,
        start,
        gaps.join(", "),
        windows
    ))
}

fn steps_to(v: &[rlsum::rl::ValidationReport<f64>], threshold: f64) -> Option<usize> {
    v.iter().find(|r| r.length >= threshold).map(|r| r.step)
}

fn pretraining_echo() -> Check {
    let mut with = Vec::new();
    let mut without = Vec::new();
    for seed in [1u64, 2, 3] {
        for (pretrain_steps, out) in [(500, &mut with), (0, &mut without)] {
            let cfg = ExperimentConfig {
                seed,
                pretrain_steps,
                rl_steps: 200,
                eval_every: 1,
                ..ExperimentConfig::default()
            };
            let r = run_experiment::<f64>(&cfg).map_err(|e| e.to_string())?;
            out.push(steps_to(&r.rl.validation, 0.7));
        }
    }
    let median = |xs: &[Option<usize>]| {
        let mut v: Vec<usize> = xs.iter().map(|x| x.unwrap_or(usize::MAX)).collect();
        v.sort_unstable();
        v[1]
    };
    let (mw, mo) = (median(&with), median(&without));
    let show = |x: usize| if x == usize::MAX { "never".to_string() } else { x.to_string() };
    ensure(mw != usize::MAX && (mo == usize::MAX || 2 * mw <= mo), || {
        format!("median steps to R_L >= 0.7: with {} vs without {}", show(mw), show(mo))
    })?;
    Ok(format!(
        "median RL steps to R_L >= 0.7: pretrained {} vs from scratch {} (per seed {with:?} / {without:?})",
        show(mw),
        show(mo)
    ))
}

// ---------------------------------------------------------------- driver

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("reward-math suite", 10, reward_math),
        ("gradient check", 30, gradient_check),
        ("reduction identities", 60, reduction_identities),
        ("perturbation suite", 30, perturbation_suite),
        ("decoding suite", 60, decoding_suite),
        ("metric oracle", 30, metric_oracle),
        ("toy end-to-end", 900, toy_end_to_end),
        ("pretraining-effect echo", 900, pretraining_echo),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = t.elapsed();
        let out = match out {
            Ok(detail) if elapsed > Duration::from_secs(budget) => {
                Err(format!("{detail}; took {:.1}s, budget {budget}s", elapsed.as_secs_f64()))
            }
            other => other,
        };
        match out {
            Ok(detail) => println!("PASS  {name:<24} {:>7.2}s  {detail}", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<24} {:>7.2}s  {detail}", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
