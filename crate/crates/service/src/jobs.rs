//! In-memory scrape jobs: the cached contents a user refines and exports.

use std::collections::HashMap;

use chrono::{DateTime, Duration, Utc};
use indexmap::IndexSet;
use parking_lot::Mutex;
use serde::Serialize;

use scrapeflow_core::dom::TraversalStats;
use scrapeflow_core::ClassContents;

pub const DEFAULT_JOB_TTL: Duration = Duration::hours(1);
pub const DEFAULT_JOBS_PER_USER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Fetched,
    Refined,
    Exported,
}

#[derive(Debug)]
pub struct ScrapeJob {
    pub id: String,
    pub owner: String,
    pub url: String,
    pub consent: bool,
    pub history_id: String,
    pub created_at: DateTime<Utc>,
    pub stats: TraversalStats,
    /// Never mutated after creation.
    pub contents: ClassContents,
    state: Mutex<JobState>,
}

impl ScrapeJob {
    pub fn new(
        owner: &str,
        url: &str,
        consent: bool,
        history_id: String,
        created_at: DateTime<Utc>,
        stats: TraversalStats,
        contents: ClassContents,
    ) -> Self {
        ScrapeJob {
            id: uuid::Uuid::new_v4().simple().to_string(),
            owner: owner.to_string(),
            url: url.to_string(),
            consent,
            history_id,
            created_at,
            stats,
            contents,
            state: Mutex::new(JobState::Fetched),
        }
    }

    pub fn state(&self) -> JobState {
        *self.state.lock()
    }

    /// Moves the job forward; states never go back.
    pub fn advance(&self, to: JobState) {
        let mut s = self.state.lock();
        *s = (*s).max(to);
    }
}

pub enum Lookup {
    Found(std::sync::Arc<ScrapeJob>),
    Foreign,
    Missing,
}

#[derive(Default)]
struct Inner {
    jobs: HashMap<String, std::sync::Arc<ScrapeJob>>,
    /// Per-user job ids, least recently used first.
    lru: HashMap<String, IndexSet<String>>,
}

pub struct JobCache {
    ttl: Duration,
    per_user: usize,
    inner: Mutex<Inner>,
}

impl JobCache {
    pub fn new(ttl: Duration, per_user: usize) -> Self {
        JobCache {
            ttl,
            per_user: per_user.max(1),
            inner: Mutex::default(),
        }
    }

    pub fn insert(&self, job: ScrapeJob) -> std::sync::Arc<ScrapeJob> {
        let job = std::sync::Arc::new(job);
        let mut inner = self.inner.lock();
        let order = inner.lru.entry(job.owner.clone()).or_default();
        order.insert(job.id.clone());
        let evicted: Vec<String> = if order.len() > self.per_user {
            order.drain(..order.len() - self.per_user).collect()
        } else {
            Vec::new()
        };
        for id in evicted {
            inner.jobs.remove(&id);
        }
        inner.jobs.insert(job.id.clone(), job.clone());
        job
    }

    /// Looks up `id` for `user`, dropping it if expired and marking it recently used.
    pub fn get(&self, id: &str, user: &str, now: DateTime<Utc>) -> Lookup {
        let mut inner = self.inner.lock();
        let Some(job) = inner.jobs.get(id).cloned() else {
            return Lookup::Missing;
        };
        if job.created_at + self.ttl <= now {
            inner.jobs.remove(id);
            if let Some(order) = inner.lru.get_mut(&job.owner) {
                order.shift_remove(id);
            }
            return Lookup::Missing;
        }
        if job.owner != user {
            return Lookup::Foreign;
        }
        if let Some(order) = inner.lru.get_mut(user) {
            order.shift_remove(id);
            order.insert(id.to_string());
        }
        Lookup::Found(job)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    fn job(owner: &str) -> ScrapeJob {
        ScrapeJob::new(
            owner,
            "http://x/",
            true,
            "h".into(),
            t0(),
            TraversalStats::default(),
            ClassContents::new(),
        )
    }

    #[test]
    fn ownership_and_expiry() {
        let cache = JobCache::new(Duration::hours(1), 10);
        let id = cache.insert(job("alice")).id.clone();
        assert!(matches!(cache.get(&id, "alice", t0()), Lookup::Found(_)));
        assert!(matches!(cache.get(&id, "bob", t0()), Lookup::Foreign));
        assert!(matches!(cache.get("nope", "alice", t0()), Lookup::Missing));
        assert!(matches!(
            cache.get(&id, "alice", t0() + Duration::hours(1)),
            Lookup::Missing
        ));
        assert!(cache.is_empty());
    }

    #[test]
    fn evicts_least_recently_used_per_user() {
        let cache = JobCache::new(Duration::hours(1), 2);
        let a = cache.insert(job("alice")).id.clone();
        let b = cache.insert(job("alice")).id.clone();
        let other = cache.insert(job("bob")).id.clone();
        assert!(matches!(cache.get(&a, "alice", t0()), Lookup::Found(_)));
        let c = cache.insert(job("alice")).id.clone();
        assert!(matches!(cache.get(&b, "alice", t0()), Lookup::Missing));
        assert!(matches!(cache.get(&a, "alice", t0()), Lookup::Found(_)));
        assert!(matches!(cache.get(&c, "alice", t0()), Lookup::Found(_)));
        assert!(matches!(cache.get(&other, "bob", t0()), Lookup::Found(_)));
    }

    #[test]
    fn state_only_advances() {
        let j = job("alice");
        j.advance(JobState::Exported);
        j.advance(JobState::Refined);
        assert_eq!(j.state(), JobState::Exported);
    }
}
