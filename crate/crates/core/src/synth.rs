//! Synthetic corpora with planted genre structure and planted trait effects.
//!
//! Books belong to one genre each and mostly carry that genre's tags. Pages
//! hold one or more books. Every page gets a latent trait target per
//! affected trait, correlated with the share of its books in the planted
//! group; users then like pages with probability tilted towards targets
//! close to their own scores. Because the target spread is
//! `√(σ_u² − τ²)` for tilt width `τ`, the likers of a page end up centered
//! on its target and page trait medians inherit the planted correlation.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Factor, FactorScores, ScoreScale, TagApplication, TagCorpus, UserRecord};
use crate::error::{Error, Result};
use crate::rng;

/// Tie page targets for `trait_name` to the book share of genre `group`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    pub group: usize,
    #[serde(rename = "trait")]
    pub trait_name: Factor,
    pub rho: f64,
}

/// Tie a user's like count to one of their trait scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikeEffect {
    #[serde(rename = "trait")]
    pub trait_name: Factor,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_books: usize,
    pub n_tags: usize,
    pub n_users: usize,
    pub n_pages: usize,
    pub n_genres: usize,
    pub planted_effects: Vec<PlantedEffect>,
    pub like_effects: Vec<LikeEffect>,
    /// Chance a book carries any given tag of its own genre.
    pub tag_keep: f64,
    /// Mean application count above the minimum of 3.
    pub count_mean: f64,
    /// Count decay over a genre's tags, `(rank + 1)^-zipf`; 0 disables.
    pub zipf: f64,
    /// Mean number of off-genre tags per book.
    pub noise_tags: f64,
    pub max_books_per_page: usize,
    pub trait_mean: f64,
    pub trait_sd: f64,
    /// Width of the like tilt around a page's target.
    pub tilt_width: f64,
    pub likes_mean: f64,
    pub likes_sd: f64,
    pub scale: ScoreScale,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_books: 300,
            n_tags: 120,
            n_users: 3000,
            n_pages: 500,
            n_genres: 4,
            planted_effects: Vec::new(),
            like_effects: Vec::new(),
            tag_keep: 0.8,
            count_mean: 4.0,
            zipf: 0.0,
            noise_tags: 1.0,
            max_books_per_page: 2,
            trait_mean: 3.0,
            trait_sd: 0.7,
            tilt_width: 0.35,
            likes_mean: 20.0,
            likes_sd: 6.0,
            scale: ScoreScale::default(),
            seed: 0,
        }
    }
}

/// A generated corpus together with the structure planted in it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub corpus: TagCorpus,
    /// Genre of each book, aligned with `corpus.books`.
    pub book_genres: Vec<usize>,
    /// Genre (tag group) of each tag, aligned with `corpus.tags`.
    pub tag_groups: Vec<usize>,
    /// Latent trait targets per page, for affected traits only.
    pub page_targets: BTreeMap<String, BTreeMap<Factor, f64>>,
}

const SYLLABLES: [&str; 16] = [
    "ba", "de", "ki", "lo", "mu", "na", "pe", "ri", "so", "tu", "va", "ze", "go", "fi", "ha", "jo",
];

/// Distinct pseudo-word for index `i`, so tags share no words.
fn pseudo_word(mut i: usize, width: usize) -> String {
    let mut s = String::new();
    for _ in 0..width {
        s.push_str(SYLLABLES[i % 16]);
        i /= 16;
    }
    s
}

fn infeasible(msg: impl Into<String>) -> Error {
    Error::InfeasibleSpec(msg.into())
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_genres == 0 || self.n_books == 0 || self.n_pages == 0 || self.n_users == 0 {
            return Err(infeasible("genres, books, pages and users must all be positive"));
        }
        if self.n_genres > self.n_tags {
            return Err(infeasible(format!("{} genres need at least as many tags, got {}", self.n_genres, self.n_tags)));
        }
        if self.n_genres > self.n_books {
            return Err(infeasible(format!("{} genres need at least as many books, got {}", self.n_genres, self.n_books)));
        }
        if !(self.tag_keep > 0.0 && self.tag_keep <= 1.0) {
            return Err(infeasible("tag_keep must lie in (0, 1]"));
        }
        if self.max_books_per_page == 0 {
            return Err(infeasible("pages need at least one book"));
        }
        if !(self.count_mean >= 0.0 && self.noise_tags >= 0.0 && self.zipf >= 0.0 && self.likes_sd >= 0.0) {
            return Err(infeasible("count, noise, zipf and like spreads must be nonnegative"));
        }
        if self.likes_mean < 1.0 {
            return Err(infeasible("likes_mean must be at least 1"));
        }
        if !(self.trait_sd > 0.0) || self.scale.min >= self.scale.max {
            return Err(infeasible("trait_sd must be positive and the scale nonempty"));
        }
        for e in &self.planted_effects {
            if e.group >= self.n_genres {
                return Err(infeasible(format!("effect on group {} but only {} genres", e.group, self.n_genres)));
            }
        }
        if !self.planted_effects.is_empty() && !(self.tilt_width > 0.0 && self.tilt_width < self.trait_sd) {
            return Err(infeasible("tilt_width must lie in (0, trait_sd)"));
        }
        for f in Factor::ALL {
            let total: f64 = self.planted_effects.iter().filter(|e| e.trait_name == f).map(|e| e.rho * e.rho).sum();
            if self.planted_effects.iter().any(|e| e.trait_name == f && e.rho.abs() >= 1.0) || total >= 1.0 {
                return Err(infeasible(format!("planted effects on {f} need sum of rho^2 < 1")));
            }
        }
        let like_total: f64 = self.like_effects.iter().map(|e| e.rho * e.rho).sum();
        if self.like_effects.iter().any(|e| e.rho.abs() >= 1.0) || like_total >= 1.0 {
            return Err(infeasible("like effects need sum of rho^2 < 1"));
        }
        Ok(())
    }
}

pub fn generate(spec: &SynthSpec) -> Result<TagCorpus> {
    Ok(generate_with_truth(spec)?.corpus)
}

pub fn generate_with_truth(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let g = spec.n_genres;
    let seed = spec.seed;

    // tags: contiguous groups whose sizes differ by at most one
    let width = {
        let mut w = 3;
        while 16usize.pow(w as u32) < spec.n_tags {
            w += 1;
        }
        w
    };
    let tags: Vec<String> = (0..spec.n_tags).map(|i| pseudo_word(i, width)).collect();
    let tag_groups: Vec<usize> = (0..spec.n_tags).map(|i| i * g / spec.n_tags).collect();
    let mut group_tags: Vec<Vec<usize>> = vec![Vec::new(); g];
    for (t, &grp) in tag_groups.iter().enumerate() {
        group_tags[grp].push(t);
    }

    // books and their tag applications
    let books: Vec<String> = (0..spec.n_books).map(|i| format!("book{i:05}")).collect();
    let book_genres: Vec<usize> = (0..spec.n_books).map(|i| i % g).collect();
    let noise = (spec.noise_tags > 0.0).then(|| Poisson::new(spec.noise_tags).expect("positive mean"));
    let mut applications = Vec::new();
    for (b, book) in books.iter().enumerate() {
        let mut r = rng::stream(seed, "synth_book", b as u64);
        let own = &group_tags[book_genres[b]];
        let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
        for (rank, &t) in own.iter().enumerate() {
            if r.random::<f64>() < spec.tag_keep {
                let mean = spec.count_mean * ((rank + 1) as f64).powf(-spec.zipf);
                counts.insert(t, 3 + draw_count(&mut r, mean));
            }
        }
        let others = spec.n_tags - own.len();
        if let (Some(noise), true) = (&noise, others > 0) {
            let k = (noise.sample(&mut r) as usize).min(others);
            for _ in 0..k {
                let mut pick = r.random_range(0..others);
                // skip over the own-genre block
                if pick >= own[0] {
                    pick += own.len();
                }
                counts.entry(pick).or_insert(3 + draw_count(&mut r, 1.0));
            }
        }
        applications.extend(counts.into_iter().map(|(t, count)| TagApplication {
            book_id: book.clone(),
            tag: tags[t].clone(),
            count,
        }));
    }

    // pages
    let pages: Vec<String> = (0..spec.n_pages).map(|i| format!("page{i:05}")).collect();
    let mut page_books: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut page_members: Vec<Vec<usize>> = Vec::with_capacity(spec.n_pages);
    for (p, page) in pages.iter().enumerate() {
        let mut r = rng::stream(seed, "synth_page", p as u64);
        let size = r.random_range(1..=spec.max_books_per_page.min(spec.n_books));
        let mut members = vec![p % spec.n_books];
        while members.len() < size {
            let b = r.random_range(0..spec.n_books);
            if !members.contains(&b) {
                members.push(b);
            }
        }
        members.sort_unstable();
        page_books.insert(page.clone(), members.iter().map(|&b| books[b].clone()).collect());
        page_members.push(members);
    }

    // page targets for the affected traits
    let sigma_c = (spec.trait_sd * spec.trait_sd - spec.tilt_width * spec.tilt_width).max(0.0).sqrt();
    let affected: Vec<Factor> = Factor::ALL
        .into_iter()
        .filter(|f| spec.planted_effects.iter().any(|e| e.trait_name == *f))
        .collect();
    let shares: Vec<Vec<f64>> = (0..g)
        .map(|grp| {
            let raw: Vec<f64> = page_members
                .iter()
                .map(|m| m.iter().filter(|&&b| book_genres[b] == grp).count() as f64 / m.len() as f64)
                .collect();
            standardize(&raw)
        })
        .collect();
    let mut targets: Vec<[f64; 5]> = vec![[spec.trait_mean; 5]; spec.n_pages];
    for &f in &affected {
        let effects: Vec<&PlantedEffect> = spec.planted_effects.iter().filter(|e| e.trait_name == f).collect();
        let resid = (1.0 - effects.iter().map(|e| e.rho * e.rho).sum::<f64>()).sqrt();
        let mut r = rng::stream(seed, "synth_target", f.index() as u64);
        for (p, t) in targets.iter_mut().enumerate() {
            let signal: f64 = effects.iter().map(|e| e.rho * shares[e.group][p]).sum();
            let eps: f64 = StandardNormal.sample(&mut r);
            t[f.index()] = spec.trait_mean + sigma_c * (signal + resid * eps);
        }
    }

    // users
    let like_resid = (1.0 - spec.like_effects.iter().map(|e| e.rho * e.rho).sum::<f64>()).sqrt();
    let two_tau2 = 2.0 * spec.tilt_width * spec.tilt_width;
    let mut users = Vec::with_capacity(spec.n_users);
    for u in 0..spec.n_users {
        let mut r = rng::stream(seed, "synth_user", u as u64);
        let z: [f64; 5] = std::array::from_fn(|_| StandardNormal.sample(&mut r));
        let scores: [f64; 5] =
            std::array::from_fn(|k| (spec.trait_mean + spec.trait_sd * z[k]).clamp(spec.scale.min, spec.scale.max));
        let e: f64 = StandardNormal.sample(&mut r);
        let drive: f64 = spec.like_effects.iter().map(|l| l.rho * z[l.trait_name.index()]).sum::<f64>() + like_resid * e;
        let n_likes = ((spec.likes_mean + spec.likes_sd * drive).round().max(1.0) as usize).min(spec.n_pages);

        // weighted sampling without replacement via Gumbel-top-k on log weights
        let mut keys: Vec<(f64, usize)> = (0..spec.n_pages)
            .map(|p| {
                let log_w: f64 = affected
                    .iter()
                    .map(|f| {
                        let d = scores[f.index()] - targets[p][f.index()];
                        -d * d / two_tau2
                    })
                    .sum();
                let uni: f64 = r.random::<f64>().max(f64::MIN_POSITIVE);
                (log_w - (-uni.ln()).ln(), p)
            })
            .collect();
        keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut liked: Vec<usize> = keys[..n_likes].iter().map(|k| k.1).collect();
        liked.sort_unstable();
        users.push(UserRecord {
            user_id: format!("user{u:05}"),
            scores: FactorScores(scores),
            liked_pages: liked.into_iter().map(|p| pages[p].clone()).collect(),
        });
    }

    let page_targets = pages
        .iter()
        .enumerate()
        .map(|(p, page)| (page.clone(), affected.iter().map(|&f| (f, targets[p][f.index()])).collect()))
        .collect();
    Ok(SynthOutput {
        corpus: TagCorpus {
            books,
            tags,
            applications,
            page_books,
            users,
        },
        book_genres,
        tag_groups,
        page_targets,
    })
}

fn draw_count(r: &mut impl Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(r) as u64
}

/// Zero mean, unit population sd; all zeros when constant.
fn standardize(v: &[f64]) -> Vec<f64> {
    let m = crate::numeric::mean(v);
    let sd = crate::numeric::population_sd(v);
    if sd == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - m) / sd).collect()
}
