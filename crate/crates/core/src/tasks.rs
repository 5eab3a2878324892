//! Algorithmic tasks: long binary addition, long binary multiplication and
//! sorting, with padding to power-of-two buckets and a length curriculum.
//!
//! Arithmetic examples are `[bits(a), SEP, bits(b)]` with little-endian bits;
//! the target holds the little-endian bits of the result, left-aligned and
//! filled with `BIT0` up to the input length. The loss mask covers exactly
//! the unpadded positions.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const PAD: usize = 0;
pub const BIT0: usize = 1;
pub const BIT1: usize = 2;
pub const SEP: usize = 3;
/// Symbols used by the arithmetic tasks.
pub const ARITHMETIC_VOCAB: usize = 4;
pub const DEFAULT_ALPHABET: usize = 12;
pub const TRAIN_BUCKETS: [usize; 4] = [8, 16, 32, 64];
/// Shortest length a model instance can run at.
pub const MIN_BUCKET: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Addition,
    Multiplication,
    /// Values `1..=alphabet`, sorted ascending.
    Sorting { alphabet: usize },
}

/// How the raw length of a generated example is chosen for a bucket `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthMode {
    /// Uniform over the raw lengths that land in bucket `L`, i.e. `(L/2, L]`.
    Bucket,
    /// As long as the task allows within `L`.
    Full,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Addition => "addition",
            Task::Multiplication => "multiplication",
            Task::Sorting { .. } => "sorting",
        }
    }

    pub fn from_name(name: &str, alphabet: usize) -> Result<Self> {
        match name {
            "addition" => Ok(Task::Addition),
            "multiplication" => Ok(Task::Multiplication),
            "sorting" if alphabet >= 1 => Ok(Task::Sorting { alphabet }),
            "sorting" => Err(Error::invalid("sorting alphabet must be at least 1")),
            _ => Err(Error::invalid(format!(
                "unknown task {name:?} (expected addition, multiplication or sorting)"
            ))),
        }
    }

    /// Input symbols, including `PAD`.
    pub fn vocab(self) -> usize {
        match self {
            Task::Sorting { alphabet } => alphabet + 1,
            _ => ARITHMETIC_VOCAB,
        }
    }

    pub fn classes(self) -> usize {
        self.vocab()
    }

    /// Raw example fitting in `max_len`, tagged with its own bucket.
    pub fn generate<R: Rng + ?Sized>(self, max_len: usize, mode: LengthMode, rng: &mut R) -> Result<TaskExample> {
        if max_len < MIN_BUCKET {
            return Err(Error::invalid(format!("max_len {max_len} below {MIN_BUCKET}")));
        }
        match self {
            Task::Addition => {
                let total = pick_length(max_len, mode, 3, max_len, rng);
                let la = rng.random_range(1..=total - 2);
                let lb = total - 1 - la;
                Ok(addition_example(&random_bits(la, rng), &random_bits(lb, rng)))
            }
            Task::Multiplication => {
                let most = (max_len - 1) / 2;
                let (la, lb) = match mode {
                    LengthMode::Full => (most, most),
                    LengthMode::Bucket => loop {
                        let la = rng.random_range(1..=most);
                        let lb = rng.random_range(1..=most);
                        if la + lb + 1 > max_len / 2 {
                            break (la, lb);
                        }
                    },
                };
                Ok(multiplication_example(&random_bits(la, rng), &random_bits(lb, rng)))
            }
            Task::Sorting { alphabet } => {
                let len = pick_length(max_len, mode, 1, max_len, rng);
                let values: Vec<usize> = (0..len).map(|_| rng.random_range(1..=alphabet)).collect();
                Ok(sorting_example(&values))
            }
        }
    }

    /// Example of bucket `len` padded to exactly `len`.
    pub fn sample<R: Rng + ?Sized>(self, len: usize, mode: LengthMode, rng: &mut R) -> Result<TaskExample> {
        let raw = self.generate(len, mode, rng)?;
        pad_to_length(&raw, len, None::<&mut R>)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn pick_length<R: Rng + ?Sized>(max_len: usize, mode: LengthMode, min: usize, max: usize, rng: &mut R) -> usize {
    match mode {
        LengthMode::Full => max,
        LengthMode::Bucket => rng.random_range((max_len / 2 + 1).max(min)..=max),
    }
}

fn random_bits<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<bool> {
    (0..len).map(|_| rng.random()).collect()
}

/// One instance: input symbols, target classes and 0/1 loss weights of equal
/// length, plus the padded length it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskExample {
    pub input: Vec<usize>,
    pub target: Vec<usize>,
    pub mask: Vec<u8>,
    pub bucket: usize,
}

impl TaskExample {
    fn raw(input: Vec<usize>, target: Vec<usize>) -> Self {
        let len = input.len();
        Self {
            input,
            target,
            mask: vec![1; len],
            bucket: bucket_for(len),
        }
    }

    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    /// Number of positions the loss sees.
    pub fn masked(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0).count()
    }

    /// Tab-separated `bucket`, input, target, mask; tokens space-separated.
    pub fn to_line(&self) -> String {
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
        format!(
            "{}\t{}\t{}\t{}",
            self.bucket,
            join(&mut self.input.iter().map(|t| t.to_string())),
            join(&mut self.target.iter().map(|t| t.to_string())),
            join(&mut self.mask.iter().map(|t| t.to_string())),
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end_matches(['\n', '\r']).split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::invalid(format!("example line needs 4 tab-separated fields, got {}", fields.len())));
        }
        let parse = |s: &str| -> Result<Vec<usize>> {
            s.split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::invalid(format!("bad token {t:?}"))))
                .collect()
        };
        let bucket = fields[0]
            .parse()
            .map_err(|_| Error::invalid(format!("bad bucket {:?}", fields[0])))?;
        let input = parse(fields[1])?;
        let target = parse(fields[2])?;
        let mask: Vec<u8> = parse(fields[3])?
            .into_iter()
            .map(|m| if m <= 1 { Ok(m as u8) } else { Err(Error::invalid(format!("mask value {m} is not 0/1"))) })
            .collect::<Result<_>>()?;
        if input.len() != target.len() || input.len() != mask.len() {
            return Err(Error::invalid("input, target and mask lengths differ"));
        }
        Ok(Self { input, target, mask, bucket })
    }
}

/// Smallest power of two `>= len`, and at least [`MIN_BUCKET`].
pub fn bucket_for(len: usize) -> usize {
    len.next_power_of_two().max(MIN_BUCKET)
}

fn bits_to_tokens(bits: &[bool]) -> impl Iterator<Item = usize> + '_ {
    bits.iter().map(|&b| if b { BIT1 } else { BIT0 })
}

fn arithmetic_example(a: &[bool], b: &[bool], result: Vec<bool>) -> TaskExample {
    let mut input: Vec<usize> = bits_to_tokens(a).collect();
    input.push(SEP);
    input.extend(bits_to_tokens(b));
    let len = input.len();
    let mut target: Vec<usize> = bits_to_tokens(&result).take(len).collect();
    debug_assert!(result[target.len()..].iter().all(|&bit| !bit), "result longer than the input");
    target.resize(len, BIT0);
    TaskExample::raw(input, target)
}

/// Little-endian binary sum.
pub fn add_bits(a: &[bool], b: &[bool]) -> Vec<bool> {
    let mut out = Vec::with_capacity(a.len().max(b.len()) + 1);
    let mut carry = false;
    for i in 0..a.len().max(b.len()) {
        let x = a.get(i).copied().unwrap_or(false);
        let y = b.get(i).copied().unwrap_or(false);
        out.push(x ^ y ^ carry);
        carry = (x && y) || (carry && (x ^ y));
    }
    out.push(carry);
    out
}

/// Little-endian binary product (shift and add).
pub fn mul_bits(a: &[bool], b: &[bool]) -> Vec<bool> {
    let mut acc = vec![false; a.len() + b.len()];
    for (shift, &bit) in b.iter().enumerate() {
        if !bit {
            continue;
        }
        let mut carry = false;
        for i in 0..acc.len() - shift {
            let x = acc[shift + i];
            let y = a.get(i).copied().unwrap_or(false);
            acc[shift + i] = x ^ y ^ carry;
            carry = (x && y) || (carry && (x ^ y));
        }
    }
    acc
}

pub fn addition_example(a: &[bool], b: &[bool]) -> TaskExample {
    arithmetic_example(a, b, add_bits(a, b))
}

pub fn multiplication_example(a: &[bool], b: &[bool]) -> TaskExample {
    arithmetic_example(a, b, mul_bits(a, b))
}

pub fn sorting_example(values: &[usize]) -> TaskExample {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    TaskExample::raw(values.to_vec(), sorted)
}

/// Random addition instance fitting `max_len` (raw length in `(max_len/2, max_len]`).
pub fn gen_addition<R: Rng + ?Sized>(max_len: usize, rng: &mut R) -> Result<TaskExample> {
    Task::Addition.generate(max_len, LengthMode::Bucket, rng)
}

/// Random multiplication instance; each operand has at most `(max_len − 1)/2` bits.
pub fn gen_multiplication<R: Rng + ?Sized>(max_len: usize, rng: &mut R) -> Result<TaskExample> {
    Task::Multiplication.generate(max_len, LengthMode::Bucket, rng)
}

pub fn gen_sorting<R: Rng + ?Sized>(max_len: usize, alphabet: usize, rng: &mut R) -> Result<TaskExample> {
    Task::Sorting { alphabet }.generate(max_len, LengthMode::Bucket, rng)
}

/// Pads to the example's bucket. With `offset_rng`, the content starts at a
/// uniform random offset among all that fit; the mask moves with it.
pub fn pad_to_bucket<R: Rng + ?Sized>(
    example: &TaskExample,
    max_bucket: usize,
    offset_rng: Option<&mut R>,
) -> Result<TaskExample> {
    let len = bucket_for(example.len());
    if len > max_bucket {
        return Err(Error::invalid(format!(
            "example of length {} does not fit the largest bucket {max_bucket}",
            example.len()
        )));
    }
    pad_to_length(example, len, offset_rng)
}

/// Pads to exactly `len` positions.
pub fn pad_to_length<R: Rng + ?Sized>(
    example: &TaskExample,
    len: usize,
    offset_rng: Option<&mut R>,
) -> Result<TaskExample> {
    let raw = example.len();
    if raw > len {
        return Err(Error::invalid(format!("example of length {raw} exceeds padded length {len}")));
    }
    let offset = match offset_rng {
        Some(rng) => rng.random_range(0..=len - raw),
        None => 0,
    };
    let place = |v: &[usize]| {
        let mut out = vec![PAD; len];
        out[offset..offset + raw].copy_from_slice(v);
        out
    };
    let mut mask = vec![0u8; len];
    mask[offset..offset + raw].copy_from_slice(&example.mask);
    Ok(TaskExample {
        input: place(&example.input),
        target: place(&example.target),
        mask,
        bucket: len,
    })
}

/// Examples of one length packed row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub labels: Vec<usize>,
    pub mask: Vec<f64>,
    pub rows: usize,
    pub len: usize,
}

impl Batch {
    pub fn new(examples: &[TaskExample]) -> Result<Self> {
        let len = examples.first().map(|e| e.len()).ok_or_else(|| Error::invalid("empty batch"))?;
        if examples.iter().any(|e| e.len() != len) {
            return Err(Error::invalid("batch rows have different lengths"));
        }
        Ok(Self {
            ids: examples.iter().flat_map(|e| e.input.iter().copied()).collect(),
            labels: examples.iter().flat_map(|e| e.target.iter().copied()).collect(),
            mask: examples.iter().flat_map(|e| e.mask.iter().map(|&m| m as f64)).collect(),
            rows: examples.len(),
            len,
        })
    }
}

/// Bucket sampling over training: a linear ramp across the first quarter of
/// the run from all mass on the shortest bucket to uniform over all buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct Curriculum {
    buckets: Vec<usize>,
    ramp_steps: u64,
}

impl Curriculum {
    pub fn new(buckets: &[usize], total_steps: u64) -> Result<Self> {
        if buckets.is_empty() {
            return Err(Error::invalid("curriculum needs at least one bucket"));
        }
        let mut sorted = buckets.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(b) = sorted.iter().find(|b| !b.is_power_of_two() || **b < MIN_BUCKET) {
            return Err(Error::invalid(format!("bucket {b} is not a power of two >= {MIN_BUCKET}")));
        }
        Ok(Self {
            buckets: sorted,
            ramp_steps: (total_steps / 4).max(1),
        })
    }

    pub fn buckets(&self) -> &[usize] {
        &self.buckets
    }

    /// Fraction of the way from all-shortest to uniform.
    pub fn mix(&self, step: u64) -> f64 {
        (step as f64 / self.ramp_steps as f64).min(1.0)
    }

    pub fn probabilities(&self, step: u64) -> Vec<f64> {
        let a = self.mix(step);
        let uniform = a / self.buckets.len() as f64;
        let mut p = vec![uniform; self.buckets.len()];
        p[0] += 1.0 - a;
        p
    }

    pub fn expected_length(&self, step: u64) -> f64 {
        self.probabilities(step)
            .iter()
            .zip(&self.buckets)
            .map(|(p, &b)| p * b as f64)
            .sum()
    }

    /// Bucket for `step`; a pure function of `(step, seed)`.
    pub fn sample(&self, step: u64, seed: u64) -> usize {
        let mut rng = rng::indexed(seed, Stream::Curriculum, step);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let probs = self.probabilities(step);
        for (p, &b) in probs.iter().zip(&self.buckets) {
            acc += p;
            if u < acc {
                return b;
            }
        }
        *self.buckets.last().expect("nonempty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits_of(tokens: &[usize]) -> BigUint {
        let mut v = BigUint::from(0u32);
        for &t in tokens.iter().rev() {
            assert!(t == BIT0 || t == BIT1, "non-bit token {t}");
            v = v * 2u32 + u32::from(t == BIT1);
        }
        v
    }

    fn operands(input: &[usize]) -> (BigUint, BigUint) {
        let sep = input.iter().position(|&t| t == SEP).expect("separator");
        (bits_of(&input[..sep]), bits_of(&input[sep + 1..]))
    }

    fn from_u64(v: u64, len: usize) -> Vec<bool> {
        (0..len).map(|i| v >> i & 1 == 1).collect()
    }

    #[test]
    fn addition_example_5_plus_6() {
        let ex = addition_example(&from_u64(5, 3), &from_u64(6, 3));
        assert_eq!(ex.input, vec![BIT1, BIT0, BIT1, SEP, BIT0, BIT1, BIT1]);
        // 11 = 1011 big-endian, 1101 little-endian.
        assert_eq!(ex.target, vec![BIT1, BIT1, BIT0, BIT1, BIT0, BIT0, BIT0]);
        assert_eq!(ex.mask, vec![1; 7]);
        assert_eq!(ex.bucket, 8);
    }

    #[test]
    fn zero_operands() {
        let ex = addition_example(&from_u64(0, 4), &from_u64(0, 3));
        assert!(ex.target.iter().all(|&t| t == BIT0));
        let ex = multiplication_example(&from_u64(0, 3), &from_u64(0b1011, 4));
        assert!(ex.target.iter().all(|&t| t == BIT0));
    }

    #[test]
    fn multiplication_3_times_5() {
        let ex = multiplication_example(&from_u64(3, 2), &from_u64(5, 3));
        assert_eq!(&ex.target[..4], &[BIT1; 4]);
        assert_eq!(bits_of(&ex.target), BigUint::from(15u32));
    }

    #[test]
    fn sorting_examples() {
        assert_eq!(sorting_example(&[3, 1, 2]).target, vec![1, 2, 3]);
        assert_eq!(sorting_example(&[4, 4, 4, 4]).target, vec![4, 4, 4, 4]);
    }

    #[test]
    fn arithmetic_matches_bigint_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..10_000 {
            let max_len = TRAIN_BUCKETS[i % 4] * if i % 7 == 0 { 8 } else { 1 };
            for task in [Task::Addition, Task::Multiplication] {
                let mode = if i % 3 == 0 { LengthMode::Full } else { LengthMode::Bucket };
                let ex = task.generate(max_len, mode, &mut rng).unwrap();
                assert!(ex.len() <= max_len);
                let (a, b) = operands(&ex.input);
                let expect = if task == Task::Addition { a + b } else { a * b };
                assert_eq!(bits_of(&ex.target), expect, "{task} {:?}", ex.input);
            }
        }
    }

    #[test]
    fn sorting_matches_comparison_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let ex = gen_sorting(32, DEFAULT_ALPHABET, &mut rng).unwrap();
            let mut oracle = ex.input.clone();
            oracle.sort();
            assert_eq!(ex.target, oracle);
            assert!(ex.input.iter().all(|&v| (1..=DEFAULT_ALPHABET).contains(&v)));
        }
    }

    #[test]
    fn bucket_mode_lands_in_bucket() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &b in &TRAIN_BUCKETS {
            for task in [Task::Addition, Task::Multiplication, Task::Sorting { alphabet: 5 }] {
                for _ in 0..200 {
                    let ex = task.generate(b, LengthMode::Bucket, &mut rng).unwrap();
                    assert_eq!(ex.bucket, b, "{task} len {}", ex.len());
                }
            }
        }
    }

    #[test]
    fn full_mode_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(Task::Addition.generate(64, LengthMode::Full, &mut rng).unwrap().len(), 64);
        assert_eq!(Task::Sorting { alphabet: 3 }.generate(64, LengthMode::Full, &mut rng).unwrap().len(), 64);
        let ex = Task::Multiplication.generate(16, LengthMode::Full, &mut rng).unwrap();
        assert_eq!(ex.len(), 15);
        assert_eq!(ex.input.iter().position(|&t| t == SEP), Some(7));
    }

    #[test]
    fn padding() {
        let raw9 = sorting_example(&[1; 9]);
        let p = pad_to_bucket::<ChaCha8Rng>(&raw9, 64, None).unwrap();
        assert_eq!(p.len(), 16);
        assert_eq!(p.bucket, 16);
        assert_eq!(&p.input[9..], &[PAD; 7]);
        assert_eq!(&p.mask[9..], &[0; 7]);
        assert_eq!(p.masked(), 9);
        let raw8 = sorting_example(&[2; 8]);
        assert_eq!(pad_to_bucket::<ChaCha8Rng>(&raw8, 64, None).unwrap().len(), 8);
        assert!(pad_to_bucket::<ChaCha8Rng>(&sorting_example(&[1; 65]), 64, None).is_err());
    }

    #[test]
    fn random_offsets_cover_all_positions() {
        let raw = sorting_example(&[3, 1, 2, 5, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut seen = [0usize; 4];
        for _ in 0..2000 {
            let p = pad_to_bucket(&raw, 64, Some(&mut rng)).unwrap();
            let offset = p.mask.iter().position(|&m| m == 1).unwrap();
            assert_eq!(&p.input[offset..offset + 5], &raw.input[..]);
            assert_eq!(&p.target[offset..offset + 5], &raw.target[..]);
            assert_eq!(p.masked(), 5);
            seen[offset] += 1;
        }
        // Offsets 0..=3 for length 5 in bucket 8, each near 500.
        assert!(seen.iter().all(|&c| c > 400), "{seen:?}");
    }

    #[test]
    fn generators_are_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| gen_addition(32, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn fixture_lines_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let ex = Task::Multiplication.sample(16, LengthMode::Bucket, &mut rng).unwrap();
            let line = ex.to_line();
            assert_eq!(line.split('\t').count(), 4);
            assert_eq!(TaskExample::from_line(&line).unwrap(), ex);
        }
        assert!(TaskExample::from_line("8\t1 2\t1").is_err());
        assert!(TaskExample::from_line("8\t1 2\t1 x\t1 1").is_err());
        assert!(TaskExample::from_line("8\t1 2\t1 2\t1 2").is_err());
    }

    #[test]
    fn curriculum_schedule() {
        let c = Curriculum::new(&TRAIN_BUCKETS, 1000).unwrap();
        assert_eq!(c.probabilities(0), vec![1.0, 0.0, 0.0, 0.0]);
        assert!(c.probabilities(0)[0] >= 0.5);
        assert_eq!(c.probabilities(250), vec![0.25; 4]);
        assert_eq!(c.probabilities(999), vec![0.25; 4]);
        let mut prev = 0.0;
        for step in 0..1000 {
            let e = c.expected_length(step);
            assert!(e >= prev - 1e-12);
            prev = e;
        }
        for step in 0..200 {
            assert_eq!(c.sample(step, 3), c.sample(step, 3));
        }
        assert!((0..50).all(|seed| c.sample(0, seed) == 8));
        let late: std::collections::HashSet<usize> = (900..1000).map(|s| c.sample(s, 1)).collect();
        assert_eq!(late.len(), 4);
        assert!(Curriculum::new(&[8, 12], 10).is_err());
        assert!(Curriculum::new(&[], 10).is_err());
    }

    #[test]
    fn batch_packing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<_> = (0..3).map(|_| Task::Addition.sample(8, LengthMode::Bucket, &mut rng).unwrap()).collect();
        let b = Batch::new(&rows).unwrap();
        assert_eq!((b.rows, b.len), (3, 8));
        assert_eq!(b.ids.len(), 24);
        assert_eq!(b.mask.iter().sum::<f64>() as usize, rows.iter().map(|r| r.masked()).sum::<usize>());
        let other = Task::Addition.sample(16, LengthMode::Bucket, &mut rng).unwrap();
        assert!(Batch::new(&[rows[0].clone(), other]).is_err());
    }
}
