//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the terminal.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topomp::engine::{
    constants, Activation, Engine, LayerSpec, MessageSpec, MessageType, Selector, SelectorKind, Stage, UpdateSpec,
};
use topomp::homology::{betti_numbers, hodge_kernel_dim};
use topomp::layers::CatalogLayer;
use topomp::lifting::Graph;
use topomp::model::{Model, ModelConfig};
use topomp::neighborhoods::{incidence, up_laplacian, Normalization};
use topomp::symmetry::{orientation_deviation, permutation_deviation, random_permutations, untouched_ranks};
use topomp::synthetic::{
    block_hypergraph, random_cellular, random_complex, random_features, random_graph, random_simplicial,
    trajectory_dataset, vertex_labels, BlockParams,
};
use topomp::tensor::{grad_check, Reduce};
use topomp::train::{train, Dataset, Task, TrainConfig};
use topomp::{build_complex, CellSpec, Complex, DomainKind, FeatureStore};

const KINDS: [DomainKind; 4] = [
    DomainKind::Hypergraph,
    DomainKind::Simplicial,
    DomainKind::Cellular,
    DomainKind::Combinatorial,
];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// ∂∂ = 0

fn boundary_squared() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut complexes: Vec<Complex> = (0..200).map(|_| random_simplicial(15, 3, &mut rng)).collect();
    complexes.extend((0..50).map(|_| random_cellular(12, &mut rng)));
    let mut products = 0;
    for (i, c) in complexes.iter().enumerate() {
        ensure(c.max_rank() <= 3, || format!("complex {i} has rank {}", c.max_rank()))?;
        for r in 1..c.max_rank() {
            let lo = incidence(c, r).map_err(err)?.matrix;
            let hi = incidence(c, r + 1).map_err(err)?.matrix;
            let prod = lo.matmul(&hi).map_err(err)?;
            ensure(prod.values().iter().all(|&v| v == 0), || {
                format!("complex {i}: B{r}·B{} has a nonzero entry", r + 1)
            })?;
            products += 1;
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(30), || format!("took {took:?}"))?;
    Ok(format!("250 complexes, {products} products zero, {took:.2?}"))
}

// ---------------------------------------------------------------------------
// Betti numbers against a dense elimination oracle over hand-built boundary
// matrices.

/// Rank by Gaussian elimination with exact rational pivots (entries stay
/// small integers for these fixtures, so i128 fractions never overflow).
fn oracle_rank(rows: usize, cols: usize, entries: &[(usize, usize, i64)]) -> usize {
    let mut m: Vec<Vec<num_rational::Ratio<i128>>> = vec![vec![0.into(); cols]; rows];
    for &(r, c, v) in entries {
        m[r][c] = (v as i128).into();
    }
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| m[r][col] != 0.into()) else {
            continue;
        };
        m.swap(rank, p);
        let pivot = m[rank][col];
        for r in 0..rows {
            if r != rank && m[r][col] != 0.into() {
                let f = m[r][col] / pivot;
                let pivot_row = m[rank].clone();
                for (x, p) in m[r].iter_mut().zip(&pivot_row).skip(col) {
                    *x -= *p * f;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// A fixture described by its oriented cells; each boundary entry is
/// computed here, not by the library.
struct Fixture {
    name: &'static str,
    vertices: Vec<&'static str>,
    /// Cells of rank >= 1 as vertex lists (simplices sorted, faces as cycles).
    cells: Vec<Vec<&'static str>>,
    polygonal: bool,
    expected: Vec<usize>,
}

fn fixture_cells_by_rank(f: &Fixture) -> Vec<Vec<Vec<&'static str>>> {
    let mut by_rank: Vec<Vec<Vec<&str>>> = vec![f.vertices.iter().map(|v| vec![*v]).collect()];
    for cell in &f.cells {
        let r = if f.polygonal { cell.len().min(3) - 1 } else { cell.len() - 1 };
        if by_rank.len() <= r {
            by_rank.resize(r + 1, Vec::new());
        }
        by_rank[r].push(cell.clone());
    }
    by_rank
}

fn oracle_betti(f: &Fixture) -> Vec<usize> {
    let by_rank = fixture_cells_by_rank(f);
    let key = |c: &Vec<&'static str>| -> Vec<&'static str> {
        let mut k = c.clone();
        k.sort();
        k
    };
    let mut ranks = vec![0usize; by_rank.len() + 1];
    for r in 1..by_rank.len() {
        let index: BTreeMap<Vec<&'static str>, usize> = by_rank[r - 1].iter().enumerate().map(|(i, c)| (key(c), i)).collect();
        let mut entries = Vec::new();
        for (j, cell) in by_rank[r].iter().enumerate() {
            if f.polygonal && r == 2 {
                // walk the cycle; an edge traversed low-to-high counts +1
                for k in 0..cell.len() {
                    let (a, b) = (cell[k], cell[(k + 1) % cell.len()]);
                    let sign = if a < b { 1 } else { -1 };
                    entries.push((index[&key(&vec![a, b])], j, sign));
                }
            } else {
                // simplicial alternating sum over sorted vertices
                let mut sorted = cell.clone();
                sorted.sort();
                for drop in 0..sorted.len() {
                    let mut face = sorted.clone();
                    face.remove(drop);
                    let sign = if drop % 2 == 0 { 1 } else { -1 };
                    entries.push((index[&face], j, sign));
                }
            }
        }
        ranks[r] = oracle_rank(by_rank[r - 1].len(), by_rank[r].len(), &entries);
    }
    (0..by_rank.len()).map(|r| by_rank[r].len() - ranks[r] - ranks[r + 1]).collect()
}

fn fixture_complex(f: &Fixture) -> Result<Complex, String> {
    let specs: Vec<CellSpec> = if f.polygonal {
        f.cells
            .iter()
            .map(|c| if c.len() == 2 { CellSpec::new(1, c) } else { CellSpec::face(c) })
            .collect()
    } else {
        f.cells.iter().map(|c| CellSpec::simplex(c)).collect()
    };
    let kind = if f.polygonal {
        DomainKind::Cellular
    } else {
        DomainKind::Simplicial
    };
    build_complex(kind, &f.vertices, &specs).map_err(err)
}

fn simplices(tops: &[&[&'static str]]) -> Vec<Vec<&'static str>> {
    let mut out: Vec<Vec<&str>> = Vec::new();
    for top in tops {
        for mask in 1u32..(1 << top.len()) {
            let s: Vec<&str> = (0..top.len()).filter(|i| mask & (1 << i) != 0).map(|i| top[i]).collect();
            if s.len() > 1 && !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out.sort_by_key(|s| s.len());
    out
}

fn cube() -> Fixture {
    let v = ["000", "001", "010", "011", "100", "101", "110", "111"];
    let mut cells: Vec<Vec<&str>> = Vec::new();
    for (i, a) in v.iter().enumerate() {
        for b in &v[i + 1..] {
            let diff = a.bytes().zip(b.bytes()).filter(|(x, y)| x != y).count();
            if diff == 1 {
                cells.push(vec![a, b]);
            }
        }
    }
    for face in [
        ["000", "001", "011", "010"],
        ["100", "101", "111", "110"],
        ["000", "001", "101", "100"],
        ["010", "011", "111", "110"],
        ["000", "010", "110", "100"],
        ["001", "011", "111", "101"],
    ] {
        cells.push(face.to_vec());
    }
    Fixture {
        name: "cube surface",
        vertices: v.to_vec(),
        cells,
        polygonal: true,
        expected: vec![1, 0, 1],
    }
}

fn betti_oracle() -> Outcome {
    let fixtures = vec![
        Fixture {
            name: "C3",
            vertices: vec!["a", "b", "c"],
            cells: vec![vec!["a", "b"], vec!["b", "c"], vec!["a", "c"]],
            polygonal: false,
            expected: vec![1, 1],
        },
        Fixture {
            name: "filled triangle",
            vertices: vec!["a", "b", "c"],
            cells: simplices(&[&["a", "b", "c"]]),
            polygonal: false,
            expected: vec![1, 0, 0],
        },
        Fixture {
            name: "tetrahedron surface",
            vertices: vec!["a", "b", "c", "d"],
            cells: simplices(&[&["a", "b", "c"], &["a", "b", "d"], &["a", "c", "d"], &["b", "c", "d"]]),
            polygonal: false,
            expected: vec![1, 0, 1],
        },
        cube(),
        Fixture {
            name: "two filled triangles",
            vertices: vec!["a", "b", "c", "x", "y", "z"],
            cells: simplices(&[&["a", "b", "c"], &["x", "y", "z"]]),
            polygonal: false,
            expected: vec![2, 0, 0],
        },
    ];
    let mut seen = Vec::new();
    for f in &fixtures {
        let oracle = oracle_betti(f);
        ensure(oracle == f.expected, || format!("{}: oracle gives {oracle:?}, listed {:?}", f.name, f.expected))?;
        let c = fixture_complex(f)?;
        let lib = betti_numbers(&c).map_err(err)?;
        ensure(lib == oracle, || format!("{}: library {lib:?} vs oracle {oracle:?}", f.name))?;
        for (r, &b) in oracle.iter().enumerate() {
            let k = hodge_kernel_dim(&c, r, 1e-8).map_err(err)?;
            ensure(k == b, || format!("{}: dim ker H{r} = {k}, oracle {b}", f.name))?;
        }
        seen.push(format!("{} {oracle:?}", f.name));
    }
    Ok(seen.join(", "))
}

// ---------------------------------------------------------------------------
// Graph identities

fn dense_i64(m: &topomp::sparse::Csr<i64>) -> Vec<i64> {
    m.to_dense()
}

fn graph_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..100 {
        let n = rng.random_range(2..=20);
        let p = rng.random_range(0.1..0.6);
        let g: Graph = random_graph(n, p, &mut rng);
        let labels = vertex_labels(n);
        let edges = g.edges();
        // D - A and A + D straight from the edge list
        let mut lap = vec![0i64; n * n];
        let mut signless = vec![0i64; n * n];
        for &(a, b) in &edges {
            for (x, y) in [(a, b), (b, a)] {
                lap[x * n + y] -= 1;
                signless[x * n + y] += 1;
                lap[x * n + x] += 1;
                signless[x * n + x] += 1;
            }
        }
        let specs: Vec<CellSpec> = edges.iter().map(|&(a, b)| CellSpec::new(1, &[&labels[a], &labels[b]])).collect();
        let sc = build_complex(DomainKind::Simplicial, &labels, &specs).map_err(err)?;
        let l0 = up_laplacian(&sc, 0).map_err(err)?.matrix;
        ensure(dense_i64(&l0) == lap, || format!("graph {trial}: L_up0 != D - A"))?;
        if edges.is_empty() {
            continue;
        }
        let hg = build_complex(DomainKind::Hypergraph, &labels, &specs).map_err(err)?;
        let b1 = incidence(&hg, 1).map_err(err)?.matrix;
        let abs = b1.map(|v: i64| v.abs());
        let bbt = abs.matmul(&abs.transpose()).map_err(err)?;
        ensure(dense_i64(&bbt) == signless, || format!("graph {trial}: |B1||B1|ᵀ != A + D"))?;
    }
    Ok("100 random graphs (n <= 20)".into())
}

// ---------------------------------------------------------------------------
// Catalog instances sized to a complex

const DIM: usize = 3;

fn catalog(c: &Complex, d: usize) -> Vec<CatalogLayer> {
    let top = c.max_rank();
    let mut pairs = vec![(0, 1)];
    if top >= 2 {
        pairs.push((1, 2));
        pairs.push((0, top));
    }
    let in_dims: BTreeMap<usize, usize> = (0..=top).map(|r| (r, d)).collect();
    let custom = Stage::new(
        vec![
            MessageSpec::standard(Selector::on_rank(SelectorKind::AdjacencyUp, 0), d, d)
                .with_type(MessageType::Attentional)
                .with_agg(Reduce::Max),
            MessageSpec::standard(Selector::boundary(1), d, d).with_type(MessageType::General),
        ],
        UpdateSpec::activation(Activation::Sigmoid),
    );
    vec![
        CatalogLayer::HgTwoPhase {
            node_in: d,
            edge_dim: d,
            node_out: d,
            agg: Reduce::Mean,
            attentional: false,
            activation: Activation::Tanh,
            recurrent: false,
        },
        CatalogLayer::HgTwoPhase {
            node_in: d,
            edge_dim: d,
            node_out: d,
            agg: Reduce::Sum,
            attentional: true,
            activation: Activation::Relu,
            recurrent: true,
        },
        CatalogLayer::HodgeConv {
            rank: 1,
            in_dim: d,
            out_dim: d,
            order: 2,
            include_identity: true,
            normalization: Normalization::SymDegree,
            activation: Activation::Tanh,
        },
        CatalogLayer::Scone {
            in_dim: d,
            out_dim: d,
            activation: Activation::Tanh,
        },
        CatalogLayer::Mpsn { max_rank: top, dim: d },
        CatalogLayer::CccAttention {
            rank_pairs: pairs,
            in_dims,
            out_dim: d,
            activation: Activation::Relu,
        },
        CatalogLayer::Custom { stages: vec![custom] },
    ]
}

fn single_layer(layer: CatalogLayer, c: &Complex, h: &FeatureStore, seed: u64) -> Result<Model, String> {
    let config = ModelConfig {
        layers: vec![layer],
        readout: None,
    };
    Model::init(config, c, &h.dims(), seed).map_err(err)
}

fn permutation_equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for kind in KINDS {
        for i in 0..20 {
            let c = random_complex(kind, 10, &mut rng);
            let h = random_features(&c, DIM, &mut rng);
            let perms = random_permutations(&c, &mut rng);
            for layer in catalog(&c, DIM) {
                let name = layer.name();
                let model = single_layer(layer, &c, &h, i)?;
                let f = |c: &Complex, h: &FeatureStore| model.forward(c, h).map(|o| o.features);
                let dev = permutation_deviation(&c, &h, &perms, f).map_err(|e| format!("{name} on {kind:?}: {e}"))?;
                ensure(dev < 1e-9, || format!("{name} on {kind:?} #{i}: deviation {dev:e}"))?;
                worst = worst.max(dev);
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} layer/complex pairs, max deviation {worst:.1e}"))
}

fn orientation_equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let c = random_simplicial(10, 3, &mut rng);
        let h = FeatureStore::new().with(1, random_features(&c, DIM, &mut rng).remove(1).expect("rank 1"));
        let n = c.num_cells(1);
        let flips: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        for layer in [
            CatalogLayer::Scone {
                in_dim: DIM,
                out_dim: DIM,
                activation: Activation::Tanh,
            },
            CatalogLayer::HodgeConv {
                rank: 1,
                in_dim: DIM,
                out_dim: DIM,
                order: 2,
                include_identity: true,
                normalization: Normalization::None,
                activation: Activation::Tanh,
            },
        ] {
            let name = layer.name();
            let model = single_layer(layer, &c, &h, i)?;
            let f = |c: &Complex, h: &FeatureStore| model.forward(c, h).map(|o| o.features);
            let dev = orientation_deviation(&c, &h, 1, &flips, f).map_err(err)?;
            ensure(dev < 1e-9, || format!("{name} on SC #{i}: deviation {dev:e}"))?;
            worst = worst.max(dev);
        }
    }
    Ok(format!("scone and hodge_conv on 20 SCs, max deviation {worst:.1e}"))
}

fn locality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = DIM;
    // rank 0 and rank 1 exchange messages through B1 and B1ᵀ only
    let spec = LayerSpec::single(Stage::new(
        vec![
            MessageSpec::standard(Selector::boundary(1), d, d),
            MessageSpec::standard(Selector::coboundary(1), d, d),
        ],
        UpdateSpec::activation(Activation::Relu),
    ));
    let layer = CatalogLayer::Custom { stages: spec.stages };
    let mut done = 0;
    while done < 20 {
        let c = random_simplicial(10, 3, &mut rng);
        if c.max_rank() < 2 {
            continue;
        }
        let h = random_features(&c, d, &mut rng);
        let model = single_layer(layer.clone(), &c, &h, done)?;
        let out = model.forward(&c, &h).map_err(err)?.features;
        let same = untouched_ranks(&h, &out);
        ensure(same.contains(&2), || format!("SC #{done}: rank 2 changed"))?;
        ensure(!same.contains(&0) && !same.contains(&1), || format!("SC #{done}: layer was a no-op"))?;
        done += 1;
    }
    Ok("rank 2 bitwise unchanged on 20 SCs".into())
}

// ---------------------------------------------------------------------------
// Gradient checks

fn small_complex<R: Rng>(kind: DomainKind, rng: &mut R) -> Complex {
    loop {
        let c = random_complex(kind, 6, rng);
        if (0..=c.max_rank()).all(|r| c.num_cells(r) <= 10) {
            return c;
        }
    }
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = 4;
    let mut worst: f64 = 0.0;
    let mut names = std::collections::BTreeSet::new();
    for kind in KINDS {
        for trial in 0..2 {
            let c = small_complex(kind, &mut rng);
            let h = random_features(&c, d, &mut rng);
            for layer in catalog(&c, d) {
                let name = layer.name();
                let mut model = single_layer(layer, &c, &h, trial)?;
                let spec = model.specs()[0].clone();
                let out_dims = spec.output_dims(&h.dims()).map_err(err)?;
                let targets: BTreeMap<usize, topomp::DenseMatrix> = out_dims
                    .iter()
                    .map(|(&r, &w)| (r, topomp::DenseMatrix::uniform(c.num_cells(r), w, 1.0, &mut rng)))
                    .collect();
                let engine = Engine::new(&c);
                let e = grad_check(&mut model.params, 1e-5, |tape, store| {
                    let vars = constants(tape, &h);
                    let out = engine.record_layer(tape, store, &spec, 0, &vars, &vars)?;
                    let mut losses = Vec::new();
                    for (r, target) in &targets {
                        let t = tape.constant(target.clone());
                        losses.push(tape.mse(out[r], t)?);
                    }
                    let all = tape.concat_rows(&losses)?;
                    Ok(tape.sum(all))
                })
                .map_err(|e| format!("{name} on {kind:?}: {e}"))?;
                ensure(e < 1e-4, || format!("{name} on {kind:?} #{trial}: relative error {e:e}"))?;
                worst = worst.max(e);
                names.insert(name);
            }
        }
    }
    Ok(format!(
        "{} over all kinds, max relative error {worst:.1e}",
        names.into_iter().collect::<Vec<_>>().join(" ")
    ))
}

// ---------------------------------------------------------------------------
// Desk-scale tasks

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load_config(name: &str) -> Result<ModelConfig, String> {
    let text = std::fs::read_to_string(config_path(name)).map_err(err)?;
    ModelConfig::from_json(&text).map_err(err)
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool")
        .install(f)
}

fn trajectory_task() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data = trajectory_dataset(400, 0.25, &mut rng).map_err(err)?;
    let test = data.samples.iter().filter(|s| s.test).count();
    ensure(test == 100, || format!("{test} held-out samples"))?;
    let data = Dataset::Complexes(data);
    let grid = data.first_complex().expect("grid").clone();
    let mut model = Model::init(load_config("trajectory.json")?, &grid, &data.input_dims(), 0).map_err(err)?;
    let cfg = TrainConfig {
        epochs: 100,
        lr: 1e-3,
        seed: 0,
        batch_size: 32,
    };
    let report = single_threaded(|| train(&mut model, Task::Trajectory, &data, &cfg)).map_err(err)?;
    let took = start.elapsed();
    let acc = report.test_accuracy;
    ensure(acc >= 0.9, || format!("test accuracy {acc:.3}"))?;
    ensure(took < Duration::from_secs(300), || format!("took {took:?}"))?;
    Ok(format!("test accuracy {acc:.3} after {} epochs, {took:.1?}", cfg.epochs))
}

fn hypergraph_task() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data = Dataset::Nodes(block_hypergraph(BlockParams::default(), &mut rng).map_err(err)?);
    let hg = data.first_complex().expect("hypergraph").clone();
    ensure(hg.num_cells(0) == 60 && hg.num_cells(1) <= 30, || format!("counts {:?}", hg.counts()))?;
    let mut model = Model::init(load_config("hg_blocks.json")?, &hg, &data.input_dims(), 0).map_err(err)?;
    let cfg = TrainConfig {
        epochs: 100,
        lr: 1e-2,
        seed: 0,
        batch_size: 32,
    };
    let report = single_threaded(|| train(&mut model, Task::NodeClass, &data, &cfg)).map_err(err)?;
    let took = start.elapsed();
    let acc = report.test_accuracy;
    ensure(acc >= 0.85, || format!("test accuracy {acc:.3}"))?;
    ensure(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!("test accuracy {acc:.3}, {took:.1?}"))
}

// ---------------------------------------------------------------------------
// Determinism through the CLI

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_topomp")).args(args).output().map_err(err)?;
    ensure(out.status.success(), || {
        format!("topomp {args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    run_cli(&["synth", "random", "--kind", "simplicial", "--dim", "3", "--seed", "4", "--output", &p("c.json")])?;
    let model = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/mpsn.json");
    let model = model.to_string_lossy();
    let forward = |out: &str| run_cli(&["forward", "--model", &model, "--complex", &p("c.json"), "--seed", "9", "--output", &p(out)]);
    forward("f1.json")?;
    forward("f2.json")?;
    let (f1, f2) = (std::fs::read(p("f1.json")).map_err(err)?, std::fs::read(p("f2.json")).map_err(err)?);
    ensure(!f1.is_empty() && f1 == f2, || "forward outputs differ".into())?;

    run_cli(&["synth", "blocks", "--seed", "2", "--output", &p("blocks.json")])?;
    let hg = config_path("hg_blocks.json");
    let hg = hg.to_string_lossy();
    let train_run = |out: &str| {
        run_cli(&[
            "train", "--task", "node-class", "--model", &hg, "--data", &p("blocks.json"), "--epochs", "10", "--lr", "0.01",
            "--seed", "3", "--output", &p(out),
        ])
    };
    let log1 = train_run("t1.json")?;
    let log2 = train_run("t2.json")?;
    let (t1, t2) = (std::fs::read(p("t1.json")).map_err(err)?, std::fs::read(p("t2.json")).map_err(err)?);
    ensure(log1 == log2, || "training logs differ".into())?;
    ensure(!t1.is_empty() && t1 == t2, || "trained parameters differ".into())?;
    Ok(format!("forward {} bytes, train params {} bytes identical", f1.len(), t1.len()))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("boundary of boundary is zero", boundary_squared),
        ("betti numbers match oracle", betti_oracle),
        ("graph reduction identities", graph_identities),
        ("permutation equivariance", permutation_equivariance),
        ("orientation equivariance", orientation_equivariance),
        ("simplicial locality", locality),
        ("gradient checks", gradient_checks),
        ("trajectory classification", trajectory_task),
        ("hypergraph node classification", hypergraph_task),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
