//! Deterministic generator for the bundled benchmark corpus.
//!
//! Produces ~200 small CNF refutation problems drawn from a handful of
//! families (implication chains, subset lattices, equality chains, diamond
//! implications, runaway term growers, pigeonhole instances, and satisfiable
//! fillers). All problems share one vocabulary of predicate, function and
//! constant names, which matters because the learned guidance models key on
//! symbol identity: a symbol that is proof-relevant in one problem should
//! look familiar in the next.
//!
//! Generation is a pure function of [`CorpusSpec`]; the same spec always
//! yields byte-identical problems.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

const PREDS: [&str; 4] = ["p", "q", "r", "m"];
const FNS: [&str; 4] = ["f", "g", "s", "h"];
const CONSTS: [&str; 9] = ["c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9"];

/// One problem: a name (also the file stem) and its CNF source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusProblem {
    pub name: String,
    pub source: String,
}

/// Family sizes and the seed controlling the randomized parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct CorpusSpec {
    pub seed: u64,
    /// Unary implication chains with noise chains alongside.
    pub chains: usize,
    /// Set-membership paths through a subset lattice.
    pub subsets: usize,
    /// Equality chains under symmetry and transitivity.
    pub equalities: usize,
    /// Two-path diamonds, no function symbols.
    pub diamonds: usize,
    /// Unprovable problems whose term universe grows without bound.
    pub runaways: usize,
    /// Pigeonhole instances, sizes cycling 2, 3, 4.
    pub pigeonholes: usize,
    /// Satisfiable problems that saturate quickly.
    pub satisfiable: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 1,
            chains: 70,
            subsets: 28,
            equalities: 32,
            diamonds: 25,
            runaways: 12,
            pigeonholes: 8,
            satisfiable: 23,
        }
    }
}

impl CorpusSpec {
    pub fn total(&self) -> usize {
        self.chains
            + self.subsets
            + self.equalities
            + self.diamonds
            + self.runaways
            + self.pigeonholes
            + self.satisfiable
    }
}

/// Generate the whole corpus; deterministic for a given [`CorpusSpec`].
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<CorpusProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.total());
    for i in 0..spec.chains {
        out.push(chain(i, &mut rng));
    }
    for i in 0..spec.subsets {
        out.push(subset(i, &mut rng));
    }
    for i in 0..spec.equalities {
        out.push(equality(i, &mut rng));
    }
    for i in 0..spec.diamonds {
        out.push(diamond(i, &mut rng));
    }
    for i in 0..spec.runaways {
        out.push(runaway(i, &mut rng));
    }
    for i in 0..spec.pigeonholes {
        out.push(pigeonhole(i));
    }
    for i in 0..spec.satisfiable {
        out.push(satisfiable(i));
    }
    out
}

/// Write one `<name>.p` file per problem.
pub fn write_corpus(dir: &Path, problems: &[CorpusProblem]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for p in problems {
        fs::write(dir.join(format!("{}.p", p.name)), &p.source)?;
    }
    Ok(())
}

/// Read every `*.p` file in a directory, sorted by name.
pub fn load_corpus(dir: &Path) -> io::Result<Vec<CorpusProblem>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("p") {
            continue;
        }
        let name = match path.file_stem().and_then(|s| s.to_str()) {
            Some(s) => s.to_string(),
            None => continue,
        };
        out.push(CorpusProblem { name, source: fs::read_to_string(&path)? });
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

/// Ground facts over predicates nothing in the problem resolves with. They
/// cost an uninformed selector one slot each but generate nothing, and a
/// trained model learns to skip them.
fn ground_noise(src: &mut String, preds: &[&str], rng: &mut ChaCha8Rng) {
    let n = rng.gen_range(5..=12usize);
    for k in 0..n {
        let pred = preds[k % preds.len()];
        let a = CONSTS[rng.gen_range(0..CONSTS.len())];
        let b = CONSTS[rng.gen_range(0..CONSTS.len())];
        let _ = writeln!(src, "cnf(junk{k}, axiom, {pred}({a}, {b})).");
    }
}

/// `f(f(...(base)...))` with `height` applications.
fn tower(fun: &str, base: &str, height: usize) -> String {
    let mut s = String::new();
    for _ in 0..height {
        s.push_str(fun);
        s.push('(');
    }
    s.push_str(base);
    for _ in 0..height {
        s.push(')');
    }
    s
}

/// A start fact, a step axiom and a goal `depth` applications away, with
/// one or more unrelated noise chains competing for selection.
fn chain(i: usize, rng: &mut ChaCha8Rng) -> CorpusProblem {
    let goal_pred = PREDS[i % PREDS.len()];
    let step = FNS[(i / PREDS.len()) % FNS.len()];
    let noise_pred = PREDS[(i + 1) % PREDS.len()];
    let noise_step = FNS[(i / PREDS.len() + 1) % FNS.len()];
    let start = CONSTS[i % CONSTS.len()];
    let depth = rng.gen_range(3..=8);
    let noise_seeds = rng.gen_range(1..=3usize);

    let mut src = String::new();
    let _ = writeln!(src, "cnf(start, axiom, {goal_pred}({start})).");
    let _ = writeln!(src, "cnf(step, axiom, ~{goal_pred}(X) | {goal_pred}({step}(X))).");
    for l in 0..noise_seeds {
        let c = CONSTS[(i + 1 + l) % CONSTS.len()];
        let _ = writeln!(src, "cnf(noise{l}, axiom, {noise_pred}({c})).");
    }
    let _ = writeln!(src, "cnf(noise_step, axiom, ~{noise_pred}(X) | {noise_pred}({noise_step}(X))).");
    ground_noise(&mut src, &["rel", "in"], rng);
    let _ = writeln!(
        src,
        "cnf(goal, negated_conjecture, ~{goal_pred}({})).",
        tower(step, start, depth)
    );
    CorpusProblem { name: format!("chain_{i:03}"), source: src }
}

/// Membership propagated along a path of subset edges, with a branch to an
/// off-path set, a second element travelling the same path, and unbounded
/// growth inside the branch set.
fn subset(i: usize, rng: &mut ChaCha8Rng) -> CorpusProblem {
    let elem = CONSTS[i % CONSTS.len()];
    let grow = FNS[i % FNS.len()];
    let mut pool: Vec<&str> = CONSTS.iter().copied().filter(|&c| c != elem).collect();
    pool.shuffle(rng);
    let edges = rng.gen_range(2..=4usize);
    let path = &pool[..edges + 1];
    let branch = pool[edges + 1];
    let rider = pool[edges + 2];

    let mut src = String::new();
    let _ = writeln!(src, "cnf(member, axiom, in({elem}, {})).", path[0]);
    let _ = writeln!(src, "cnf(rider, axiom, in({rider}, {})).", path[0]);
    for (j, w) in path.windows(2).enumerate() {
        let _ = writeln!(src, "cnf(edge{j}, axiom, ~in(X, {}) | in(X, {})).", w[0], w[1]);
    }
    let mid = path[edges / 2];
    let _ = writeln!(src, "cnf(branch, axiom, ~in(X, {mid}) | in(X, {branch})).");
    let _ = writeln!(src, "cnf(churn, axiom, ~in(X, {branch}) | in({grow}(X), {branch})).");
    // `in` junk would feed the subset edges, so stick to `rel` here.
    ground_noise(&mut src, &["rel"], rng);
    let _ = writeln!(
        src,
        "cnf(goal, negated_conjecture, ~in({elem}, {})).",
        path[edges]
    );
    CorpusProblem { name: format!("subset_{i:03}"), source: src }
}

/// A chain of ground equations closed under transitivity, plus a detached
/// two-link chain as noise. Every third problem also carries the symmetry
/// clause with randomly flipped facts, so some proofs must reorient links;
/// the rest keep facts forward-oriented and the search space small.
fn equality(i: usize, rng: &mut ChaCha8Rng) -> CorpusProblem {
    let links = rng.gen_range(3..=5usize);
    let symmetric = i.is_multiple_of(3);
    let off = (i * 2) % CONSTS.len();
    let at = |j: usize| CONSTS[(off + j) % CONSTS.len()];

    let mut src = String::new();
    if symmetric {
        let _ = writeln!(src, "cnf(symmetry, axiom, X != Y | Y = X).");
    }
    let _ = writeln!(src, "cnf(transitivity, axiom, X != Y | Y != Z | X = Z).");
    for j in 0..links {
        let (a, b) = (at(j), at(j + 1));
        if symmetric && rng.gen_bool(0.5) {
            let _ = writeln!(src, "cnf(link{j}, axiom, {b} = {a}).");
        } else {
            let _ = writeln!(src, "cnf(link{j}, axiom, {a} = {b}).");
        }
    }
    // Two junk links among constants the goal chain does not touch.
    let (ja, jb, jc) = (at(links + 1), at(links + 2), at(links + 3));
    let _ = writeln!(src, "cnf(stray0, axiom, {ja} = {jb}).");
    let _ = writeln!(src, "cnf(stray1, axiom, {jb} = {jc}).");
    ground_noise(&mut src, &["rel", "in"], rng);
    let (lo, hi) = (at(0), at(links));
    if symmetric && i.is_multiple_of(2) {
        let _ = writeln!(src, "cnf(goal, negated_conjecture, {hi} != {lo}).");
    } else {
        let _ = writeln!(src, "cnf(goal, negated_conjecture, {lo} != {hi}).");
    }
    CorpusProblem { name: format!("equality_{i:03}"), source: src }
}

/// Two independent two-step paths from a start predicate to the goal
/// predicate, with seeds on other constants deriving irrelevant facts.
fn diamond(i: usize, rng: &mut ChaCha8Rng) -> CorpusProblem {
    let start = PREDS[i % PREDS.len()];
    let left = PREDS[(i + 1) % PREDS.len()];
    let right = PREDS[(i + 2) % PREDS.len()];
    let goal = PREDS[(i + 3) % PREDS.len()];
    let c = CONSTS[i % CONSTS.len()];
    let d1 = CONSTS[(i + 3) % CONSTS.len()];
    let d2 = CONSTS[(i + 6) % CONSTS.len()];

    let mut src = String::new();
    let _ = writeln!(src, "cnf(start, axiom, {start}({c})).");
    let _ = writeln!(src, "cnf(up_left, axiom, ~{start}(X) | {left}(X)).");
    let _ = writeln!(src, "cnf(down_left, axiom, ~{left}(X) | {goal}(X)).");
    let _ = writeln!(src, "cnf(up_right, axiom, ~{start}(X) | {right}(X)).");
    let _ = writeln!(src, "cnf(down_right, axiom, ~{right}(X) | {goal}(X)).");
    let _ = writeln!(src, "cnf(stray0, axiom, {left}({d1})).");
    if rng.gen_bool(0.5) {
        let _ = writeln!(src, "cnf(stray1, axiom, {right}({d2})).");
    }
    ground_noise(&mut src, &["rel", "in"], rng);
    let _ = writeln!(src, "cnf(goal, negated_conjecture, ~{goal}({c})).");
    CorpusProblem { name: format!("diamond_{i:03}"), source: src }
}

/// Unprovable problems on which every strategy exhausts its budget. Even
/// indices grow the term universe through unary step axioms; odd indices
/// pair symmetry and transitivity with two disconnected equation islands the
/// goal tries to bridge, so clause length runs away instead of term depth.
fn runaway(i: usize, rng: &mut ChaCha8Rng) -> CorpusProblem {
    let mut src = String::new();
    if i.is_multiple_of(2) {
        let live = PREDS[i % PREDS.len()];
        let dead = PREDS[(i + 1) % PREDS.len()];
        let growers = 2 + (i / 2) % 2;
        let seed = CONSTS[i % CONSTS.len()];
        let _ = writeln!(src, "cnf(seed, axiom, {live}({seed})).");
        if rng.gen_bool(0.5) {
            let c2 = CONSTS[(i + 4) % CONSTS.len()];
            let _ = writeln!(src, "cnf(seed2, axiom, {live}({c2})).");
        }
        for g in 0..growers {
            let fun = FNS[(i + g) % FNS.len()];
            let _ = writeln!(src, "cnf(grow{g}, axiom, ~{live}(X) | {live}({fun}(X))).");
        }
        let target = CONSTS[(i + 3) % CONSTS.len()];
        let _ = writeln!(src, "cnf(goal, negated_conjecture, ~{dead}({target})).");
    } else {
        let off = (i / 2) % 3;
        let left = |j: usize| CONSTS[off + j];
        let right = |j: usize| CONSTS[off + 4 + j];
        let _ = writeln!(src, "cnf(symmetry, axiom, X != Y | Y = X).");
        let _ = writeln!(src, "cnf(transitivity, axiom, X != Y | Y != Z | X = Z).");
        for j in 0..2 {
            let (a, b) = (left(j), left(j + 1));
            if rng.gen_bool(0.5) {
                let _ = writeln!(src, "cnf(left{j}, axiom, {a} = {b}).");
            } else {
                let _ = writeln!(src, "cnf(left{j}, axiom, {b} = {a}).");
            }
            let (c, d) = (right(j), right(j + 1));
            let _ = writeln!(src, "cnf(right{j}, axiom, {c} = {d}).");
        }
        let _ = writeln!(src, "cnf(goal, negated_conjecture, {} != {}).", left(0), right(2));
    }
    CorpusProblem { name: format!("runaway_{i:03}"), source: src }
}

/// `n + 1` pigeons into `n` holes via the binary predicate `rel`; the last
/// pigeon's placement clause plays the conjecture.
fn pigeonhole(i: usize) -> CorpusProblem {
    let n = 2 + i % 3;
    let flip = (i / 3) % 2 == 1;
    let pigeon = |k: usize| if flip { CONSTS[8 - k] } else { CONSTS[k] };
    let hole = |k: usize| if flip { CONSTS[3 - k] } else { CONSTS[5 + k] };

    let placement = |p: usize| -> String {
        (0..n)
            .map(|h| format!("rel({}, {})", pigeon(p), hole(h)))
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let mut src = String::new();
    for p in 0..n {
        let _ = writeln!(src, "cnf(place{p}, axiom, {}).", placement(p));
    }
    for h in 0..n {
        for a in 0..=n {
            for b in (a + 1)..=n {
                let _ = writeln!(
                    src,
                    "cnf(cap{h}_{a}_{b}, axiom, ~rel({}, {hh}) | ~rel({}, {hh})).",
                    pigeon(a),
                    pigeon(b),
                    hh = hole(h)
                );
            }
        }
    }
    let _ = writeln!(src, "cnf(goal, negated_conjecture, {}).", placement(n));
    CorpusProblem { name: format!("pigeon_{i:03}"), source: src }
}

/// Problems with small saturated closures and no refutation.
fn satisfiable(i: usize) -> CorpusProblem {
    let mut src = String::new();
    match i % 3 {
        0 => {
            let a = PREDS[i % PREDS.len()];
            let b = PREDS[(i + 2) % PREDS.len()];
            let c = CONSTS[i % CONSTS.len()];
            let other = CONSTS[(i + 5) % CONSTS.len()];
            let _ = writeln!(src, "cnf(fact, axiom, {a}({c})).");
            let _ = writeln!(src, "cnf(rule, axiom, ~{a}(X) | {b}(X)).");
            let _ = writeln!(src, "cnf(goal, negated_conjecture, ~{b}({other})).");
        }
        1 => {
            let (x, y, z) = (
                CONSTS[i % CONSTS.len()],
                CONSTS[(i + 2) % CONSTS.len()],
                CONSTS[(i + 4) % CONSTS.len()],
            );
            let _ = writeln!(src, "cnf(fact0, axiom, rel({x}, {y})).");
            let _ = writeln!(src, "cnf(fact1, axiom, rel({y}, {z})).");
            let _ = writeln!(src, "cnf(fact2, axiom, in({x}, {z})).");
            let _ = writeln!(src, "cnf(goal, negated_conjecture, ~rel({x}, {z})).");
        }
        _ => {
            let (x, y, z, w) = (
                CONSTS[i % CONSTS.len()],
                CONSTS[(i + 1) % CONSTS.len()],
                CONSTS[(i + 4) % CONSTS.len()],
                CONSTS[(i + 5) % CONSTS.len()],
            );
            let _ = writeln!(src, "cnf(fact0, axiom, {x} = {y}).");
            let _ = writeln!(src, "cnf(fact1, axiom, {z} = {w}).");
            let _ = writeln!(src, "cnf(goal, negated_conjecture, {x} != {w}).");
        }
    }
    CorpusProblem { name: format!("sat_{i:03}"), source: src }
}
