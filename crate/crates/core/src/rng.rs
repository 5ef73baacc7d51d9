//! Reproducible sharded random streams.
//!
//! A stream is addressed by `(master_seed, shard_index, position)` and the
//! word at a position is a pure function of that triple: the SplitMix64
//! output function applied to `key(seed, shard) + (position + 1) * GAMMA`.
//!
//! Gaussians come from a 256-layer ziggurat that takes its layer and abscissa
//! from a single stream word, so every variate consumes exactly one position.
//! The rare rejection branch (about 1.5% of draws) reads extra uniforms from
//! an auxiliary counter keyed by the same position, which keeps the value at
//! each position fixed regardless of what was drawn before it.

use std::sync::OnceLock;

/// Seed used when a run does not specify one.
pub const DEFAULT_SEED: u64 = 20_190_417;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline(always)]
fn unit_open(word: u64) -> f64 {
    ((word >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// `(k + 1/2) / 2^52` for the signed top-53-bit integer `k`: symmetric in
/// (-1, 1), never zero.
#[inline(always)]
fn signed_unit(word: u64) -> f64 {
    (((word as i64) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

fn stream_key(master_seed: u64, shard_index: u64, salt: u64) -> u64 {
    mix64(mix64(master_seed ^ salt).wrapping_add(mix64(shard_index.wrapping_add(GAMMA))))
}

#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    shard_index: u64,
    position: u64,
    key: u64,
    aux_key: u64,
    zig: &'static Ziggurat,
}

impl std::fmt::Debug for Ziggurat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Ziggurat")
    }
}

impl RngStream {
    pub fn new(master_seed: u64, shard_index: u64) -> Self {
        Self::at(master_seed, shard_index, 0)
    }

    /// Stream positioned at an arbitrary logical position.
    pub fn at(master_seed: u64, shard_index: u64, position: u64) -> Self {
        Self {
            master_seed,
            shard_index,
            position,
            key: stream_key(master_seed, shard_index, 0),
            aux_key: stream_key(master_seed, shard_index, 0x5851_f42d_4c95_7f2d),
            zig: tables(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn shard_index(&self) -> u64 {
        self.shard_index
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    /// Word at `position` without advancing.
    #[inline(always)]
    pub fn word_at(&self, position: u64) -> u64 {
        mix64(self.key.wrapping_add(position.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        let w = self.word_at(self.position);
        self.position += 1;
        w
    }

    /// Uniform on the open interval (0, 1) with 53 random bits.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        unit_open(self.next_u64())
    }

    /// Standard normal variate; consumes exactly one position.
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        let position = self.position;
        let word = self.next_u64();
        let zig = self.zig;
        let layer = (word & LAYER_MASK) as usize;
        // signed abscissa in (-1, 1) from the top 53 bits
        let u = signed_unit(word);
        if u.abs() < zig.ratio[layer] {
            return u * zig.x[layer];
        }
        let mut aux = Aux::new(self.aux_key, position);
        zig.slow_path(layer, u, &mut aux)
    }

    /// Fills `out` with the next `out.len()` standard normals, the same values
    /// `next_gaussian` would return one at a time.
    ///
    /// The hash and the ziggurat fast path run over blocks in a loop that is
    /// compiled for wide vector units when the CPU has them.
    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        let mut reject = [false; FILL_BLOCK];
        for block in out.chunks_mut(FILL_BLOCK) {
            let start = self.position;
            let reject = &mut reject[..block.len()];
            fast_block(self.key, start, self.zig, block, reject);
            for (i, _) in reject.iter().enumerate().filter(|(_, &r)| r) {
                let position = start + i as u64;
                let word = self.word_at(position);
                let mut aux = Aux::new(self.aux_key, position);
                block[i] = self.zig.slow_path((word & LAYER_MASK) as usize, signed_unit(word), &mut aux);
            }
            self.position += block.len() as u64;
        }
    }
}

const FILL_BLOCK: usize = 256;

/// Ziggurat fast path over consecutive positions; flags the draws that need
/// the rejection branch.
#[multiversion::multiversion(targets("x86_64+avx512f+avx512dq+avx512vl", "x86_64+avx2"))]
fn fast_block(key: u64, start: u64, zig: &Ziggurat, out: &mut [f64], reject: &mut [bool]) {
    for ((o, r), i) in out.iter_mut().zip(reject.iter_mut()).zip(0u64..) {
        let word = mix64(key.wrapping_add(start.wrapping_add(i).wrapping_add(1).wrapping_mul(GAMMA)));
        let layer = (word & LAYER_MASK) as usize;
        let u = signed_unit(word);
        *o = u * zig.x[layer];
        *r = u.abs() >= zig.ratio[layer];
    }
}

/// Position-keyed auxiliary uniforms for the ziggurat rejection branch.
struct Aux {
    seed: u64,
    step: u64,
}

impl Aux {
    fn new(key: u64, position: u64) -> Self {
        Self { seed: mix64(key ^ position.wrapping_mul(GAMMA)), step: 0 }
    }

    #[inline]
    fn uniform(&mut self) -> f64 {
        self.step += 1;
        unit_open(mix64(self.seed.wrapping_add(self.step.wrapping_mul(GAMMA))))
    }
}

const LAYERS: usize = 256;
const LAYER_MASK: u64 = LAYERS as u64 - 1;
const ZIG_R: f64 = 3.654_152_885_361_009;
const ZIG_V: f64 = 4.928_673_233_99e-3;

struct Ziggurat {
    x: [f64; LAYERS + 1],
    ratio: [f64; LAYERS],
    // density exp(-x^2 / 2) at each layer edge
    f: [f64; LAYERS + 1],
}

fn tables() -> &'static Ziggurat {
    static TABLES: OnceLock<Ziggurat> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut x = [0.0; LAYERS + 1];
        let mut f = (-0.5 * ZIG_R * ZIG_R).exp();
        x[0] = ZIG_V / f;
        x[1] = ZIG_R;
        x[LAYERS] = 0.0;
        for i in 2..LAYERS {
            x[i] = (-2.0 * (ZIG_V / x[i - 1] + f).ln()).sqrt();
            f = (-0.5 * x[i] * x[i]).exp();
        }
        let mut ratio = [0.0; LAYERS];
        for i in 0..LAYERS {
            ratio[i] = x[i + 1] / x[i];
        }
        let f = x.map(|xi| (-0.5 * xi * xi).exp());
        Ziggurat { x, ratio, f }
    })
}

impl Ziggurat {
    /// `exp(-x^2 / 2)` for `|x|` between the edges of `layer`, evaluated
    /// lazily: `target` is compared against Taylor bounds first and `exp`
    /// runs only when the bounds cannot decide. Returns a value on the same
    /// side of `target` as the exact `exp`.
    #[inline]
    fn density_in_layer(&self, layer: usize, x: f64, target: f64) -> f64 {
        // with s = (x^2 - x_{l+1}^2) / 2 >= 0, exp(-x^2/2) = f_{l+1} exp(-s)
        // and 1 - s <= exp(-s) <= 1 - s + s^2 / 2
        let s = 0.5 * (x * x - self.x[layer + 1] * self.x[layer + 1]);
        if s < 0.0 {
            return (-0.5 * x * x).exp();
        }
        let f1 = self.f[layer + 1];
        let lower = f1 * (1.0 - s);
        let upper = f1 * (1.0 - s + 0.5 * s * s);
        // margin covers rounding in the bounds and in exp itself
        let margin = 1e-12 * f1;
        if target < lower - margin {
            return f64::INFINITY;
        }
        if target > upper + margin {
            return f64::NEG_INFINITY;
        }
        (-0.5 * x * x).exp()
    }

    #[cold]
    fn slow_path(&self, mut layer: usize, mut u: f64, aux: &mut Aux) -> f64 {
        loop {
            if layer == 0 {
                // Marsaglia's tail beyond R
                loop {
                    let x = aux.uniform().ln() / ZIG_R;
                    let y = aux.uniform().ln();
                    if -2.0 * y >= x * x {
                        return if u < 0.0 { x - ZIG_R } else { ZIG_R - x };
                    }
                }
            }
            let x = u * self.x[layer];
            let (f0, f1) = (self.f[layer], self.f[layer + 1]);
            let target = f1 + aux.uniform() * (f0 - f1);
            if target < self.density_in_layer(layer, x, target) {
                return x;
            }
            layer = (aux.uniform() * LAYERS as f64) as usize;
            u = 2.0 * aux.uniform() - 1.0;
            if u.abs() < self.ratio[layer] {
                return u * self.x[layer];
            }
        }
    }
}
