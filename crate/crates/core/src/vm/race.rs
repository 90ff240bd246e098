//! Happens-before race detection with per-wave vector clocks.
//!
//! Waves are the agents; lanes of one wave execute in lockstep and never race
//! with each other. Barriers join the clocks of a workgroup. A release fence
//! snapshots the wave's clock; atomics on a location carry that snapshot to
//! later atomics on the same location, and an acquire fence of sufficient
//! scope merges it. Two atomics never race.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::isa::{MemOrder, Scope, Space};

/// Sparse vector clock keyed by global wave id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct VClock(Vec<(u32, u32)>);

impl VClock {
    fn get(&self, wave: u32) -> u32 {
        match self.0.binary_search_by_key(&wave, |e| e.0) {
            Ok(i) => self.0[i].1,
            Err(_) => 0,
        }
    }

    fn tick(&mut self, wave: u32) {
        match self.0.binary_search_by_key(&wave, |e| e.0) {
            Ok(i) => self.0[i].1 += 1,
            Err(i) => self.0.insert(i, (wave, 1)),
        }
    }

    fn join(&mut self, other: &VClock) {
        let mut merged = Vec::with_capacity(self.0.len().max(other.0.len()));
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() || j < other.0.len() {
            match (self.0.get(i), other.0.get(j)) {
                (Some(&a), Some(&b)) if a.0 == b.0 => {
                    merged.push((a.0, a.1.max(b.1)));
                    i += 1;
                    j += 1;
                }
                (Some(&a), Some(&b)) if a.0 < b.0 => {
                    merged.push(a);
                    i += 1;
                }
                (Some(_), Some(&b)) => {
                    merged.push(b);
                    j += 1;
                }
                (Some(&a), None) => {
                    merged.push(a);
                    i += 1;
                }
                (None, Some(&b)) => {
                    merged.push(b);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        self.0 = merged;
    }
}

/// One side of a reported race.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Site {
    pub workgroup: u32,
    /// Wave index within its workgroup.
    pub wave: u32,
    pub pc: usize,
    pub write: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RaceKind {
    /// Conflicting accesses with no happens-before order. `fix` is the
    /// narrowest fence or barrier scope that can order them.
    Unordered { fix: Scope },
    /// Scratchpad access to bytes an unfinished async copy will write.
    PendingAsyncCopy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RaceReport {
    pub space: Space,
    pub address: u32,
    pub kind: RaceKind,
    pub first: Site,
    pub second: Site,
}

fn access_word(write: bool) -> &'static str {
    if write {
        "write"
    } else {
        "read"
    }
}

impl fmt::Display for RaceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let site = |s: &Site| {
            format!(
                "wg {} wave {} pc {} ({})",
                s.workgroup,
                s.wave,
                s.pc,
                access_word(s.write)
            )
        };
        match self.kind {
            RaceKind::Unordered { fix } => write!(
                f,
                "race on {} address {:#x}: {} vs {}; order them with a {}-scope barrier or release/acquire fences",
                self.space.name(),
                self.address,
                site(&self.first),
                site(&self.second),
                fix.name()
            ),
            RaceKind::PendingAsyncCopy => write!(
                f,
                "race on {} address {:#x}: async copy issued at {} still pending at {}; wait for it first",
                self.space.name(),
                self.address,
                site(&self.first),
                site(&self.second)
            ),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Access {
    wave: u32,
    clock: u32,
    pc: usize,
    write: bool,
    atomic: bool,
}

#[derive(Debug, Default)]
struct Shadow {
    write: Option<Access>,
    reads: Vec<Access>,
}

#[derive(Debug, Clone)]
struct Release {
    clock: VClock,
    scope: Scope,
}

#[derive(Debug)]
struct AsyncRegion {
    id: u64,
    wave: u32,
    workgroup: u32,
    pc: usize,
    start: u32,
    end: u32,
}

type Location = (Space, u32, u32);

const MAX_REPORTS: usize = 256;

#[derive(Debug, Default)]
pub struct RaceDetector {
    clocks: HashMap<u32, VClock>,
    /// (workgroup, wave index within the workgroup) per global wave id.
    placement: HashMap<u32, (u32, u32)>,
    releases: HashMap<u32, Release>,
    pending_acquire: HashMap<u32, Vec<(u32, Release)>>,
    shadow: HashMap<Location, Shadow>,
    sync: HashMap<Location, Vec<(u32, Release)>>,
    async_regions: Vec<AsyncRegion>,
    reports: Vec<RaceReport>,
    seen: HashSet<(Space, u32, u32, usize, usize)>,
}

fn covers(scope: Scope, same_wave: bool, same_group: bool) -> bool {
    same_wave || (same_group && scope >= Scope::Workgroup) || scope >= Scope::Device
}

impl RaceDetector {
    pub fn new() -> Self {
        RaceDetector::default()
    }

    pub fn add_wave(&mut self, wave: u32, workgroup: u32, local: u32) {
        let mut clock = VClock::default();
        clock.tick(wave);
        self.clocks.insert(wave, clock);
        self.placement.insert(wave, (workgroup, local));
    }

    pub fn reports(&self) -> &[RaceReport] {
        &self.reports
    }

    pub fn into_reports(self) -> Vec<RaceReport> {
        self.reports
    }

    fn site(&self, wave: u32, pc: usize, write: bool) -> Site {
        let (workgroup, local) = self.placement[&wave];
        Site {
            workgroup,
            wave: local,
            pc,
            write,
        }
    }

    fn location(space: Space, workgroup: u32, address: u32) -> Location {
        let owner = if space == Space::Scratch { workgroup } else { 0 };
        (space, owner, address / 4)
    }

    fn report(&mut self, loc: Location, address: u32, kind: RaceKind, first: Site, second: Site) {
        if self.reports.len() >= MAX_REPORTS {
            return;
        }
        if self.seen.insert((loc.0, loc.1, loc.2, first.pc, second.pc)) {
            self.reports.push(RaceReport {
                space: loc.0,
                address,
                kind,
                first,
                second,
            });
        }
    }

    fn ordered(&self, prev: &Access, wave: u32) -> bool {
        prev.wave == wave || self.clocks[&wave].get(prev.wave) >= prev.clock
    }

    /// Records one lane's access of the word containing `address`.
    pub fn access(&mut self, wave: u32, space: Space, address: u32, write: bool, atomic: bool, pc: usize) {
        if space == Space::Arg {
            return;
        }
        let workgroup = self.placement[&wave].0;
        let loc = Self::location(space, workgroup, address);

        if space == Space::Scratch {
            let pending: Vec<(u32, usize)> = self
                .async_regions
                .iter()
                .filter(|r| r.workgroup == workgroup && r.start <= address && address < r.end)
                .map(|r| (r.wave, r.pc))
                .collect();
            for (issuer, issue_pc) in pending {
                let first = self.site(issuer, issue_pc, true);
                let second = self.site(wave, pc, write);
                self.report(loc, address, RaceKind::PendingAsyncCopy, first, second);
            }
        }

        let current = Access {
            wave,
            clock: self.clocks[&wave].get(wave),
            pc,
            write,
            atomic,
        };
        let shadow = self.shadow.remove(&loc).unwrap_or_default();
        let mut conflicts: Vec<Access> = Vec::new();
        let conflicting = |prev: &Access| !(prev.atomic && atomic);
        if let Some(w) = shadow.write {
            if conflicting(&w) && !self.ordered(&w, wave) {
                conflicts.push(w);
            }
        }
        if write {
            for r in &shadow.reads {
                if conflicting(r) && !self.ordered(r, wave) {
                    conflicts.push(*r);
                }
            }
        }
        let mut shadow = shadow;
        if write {
            shadow.write = Some(current);
            shadow.reads.clear();
        } else {
            shadow.reads.retain(|r| r.wave != wave);
            shadow.reads.push(current);
        }
        self.shadow.insert(loc, shadow);

        for prev in conflicts {
            let same_group = self.placement[&prev.wave].0 == workgroup;
            let fix = if same_group { Scope::Workgroup } else { Scope::Device };
            let first = self.site(prev.wave, prev.pc, prev.write);
            let second = self.site(wave, pc, write);
            self.report(loc, address, RaceKind::Unordered { fix }, first, second);
        }
    }

    /// Carries release snapshots through an atomic on `address`.
    pub fn atomic_sync(&mut self, wave: u32, space: Space, address: u32) {
        let workgroup = self.placement[&wave].0;
        let loc = Self::location(space, workgroup, address);
        let entries = self.sync.entry(loc).or_default();
        if let Some(rel) = self.releases.get(&wave) {
            match entries.iter_mut().find(|e| e.0 == wave) {
                Some(e) => e.1 = rel.clone(),
                None => entries.push((wave, rel.clone())),
            }
        }
        let visible: Vec<(u32, Release)> = entries.iter().filter(|e| e.0 != wave).cloned().collect();
        let pending = self.pending_acquire.entry(wave).or_default();
        for (src, rel) in visible {
            match pending.iter_mut().find(|p| p.0 == src && p.1.scope == rel.scope) {
                Some(p) => p.1.clock.join(&rel.clock),
                None => pending.push((src, rel)),
            }
        }
    }

    pub fn fence(&mut self, wave: u32, scope: Scope, order: MemOrder) {
        if order.acquires() {
            let workgroup = self.placement[&wave].0;
            let pending = self.pending_acquire.remove(&wave).unwrap_or_default();
            let mut kept = Vec::new();
            let mut gained = VClock::default();
            for (src, rel) in pending {
                let same_group = self.placement[&src].0 == workgroup;
                if covers(scope.min(rel.scope), src == wave, same_group) {
                    gained.join(&rel.clock);
                } else {
                    kept.push((src, rel));
                }
            }
            self.pending_acquire.insert(wave, kept);
            self.clocks.get_mut(&wave).expect("known wave").join(&gained);
        }
        if order.releases() {
            let clock = self.clocks[&wave].clone();
            self.releases.insert(wave, Release { clock, scope });
            self.clocks.get_mut(&wave).expect("known wave").tick(wave);
        }
    }

    /// All `waves` leave a barrier knowing everything each did before it.
    pub fn barrier(&mut self, waves: &[u32]) {
        let mut joined = VClock::default();
        for w in waves {
            joined.join(&self.clocks[w]);
        }
        for &w in waves {
            let mut c = joined.clone();
            c.tick(w);
            self.clocks.insert(w, c);
        }
    }

    pub fn async_issue(&mut self, id: u64, wave: u32, pc: usize, start: u32, len: u32) {
        let workgroup = self.placement[&wave].0;
        self.async_regions.push(AsyncRegion {
            id,
            wave,
            workgroup,
            pc,
            start,
            end: start + len,
        });
    }

    /// Retires copy `id`; its bytes become ordinary writes by the issuing wave.
    pub fn async_complete(&mut self, id: u64) {
        let Some(i) = self.async_regions.iter().position(|r| r.id == id) else {
            return;
        };
        let region = self.async_regions.remove(i);
        let mut word = region.start & !3;
        while word < region.end {
            self.access(region.wave, Space::Scratch, word, true, false, region.pc);
            word += 4;
        }
    }
}
