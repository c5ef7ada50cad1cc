//! Streaming two-stage compressor.
//!
//! A single ordered producer feeds snapshots. Each snapshot is split into
//! spatial blocks and subsampled into that block's open chunk buffer. When
//! the snapshot count reaches a multiple of the chunk width the buffer is
//! closed and handed, by value, to a stage-1 task while ingestion continues.
//! After the stream ends, stage 2 runs once per block.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};
use serde::{Deserialize, Serialize};

use crate::archive::{Archive, ArchiveMetadata, BlockPayload, InterpRecipe};
use crate::blocking::{stage1_compress, stage2_compress, ChunkFactors, PartitionPlan};
use crate::datagen::{taylor_green_snapshot, TaylorGreenParams};
use crate::error::{Error, Result};
use crate::id::IdFactors;
use crate::matrix::DenseMatrix;
use crate::sketch::{Scheme, SubsampleSpec};

/// Closed chunks allowed in flight per block before ingestion stalls.
pub const MAX_PENDING_CHUNKS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Executor {
    /// Stage-1 runs inline on the ingesting thread.
    Serial,
    /// Stage-1 runs on a bounded pool of worker threads.
    Pool { workers: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub plan: PartitionPlan,
    /// Whole-grid subsample recipe; each block uses its restriction.
    pub spec: SubsampleSpec,
    pub stage1_rank: usize,
    pub stage2_tol: f64,
    pub executor: Executor,
    pub qoi: Option<String>,
    pub provenance: String,
}

impl StreamConfig {
    pub fn new(
        plan: PartitionPlan,
        spec: SubsampleSpec,
        stage1_rank: usize,
        stage2_tol: f64,
    ) -> Result<Self> {
        let cfg = Self {
            plan,
            spec,
            stage1_rank,
            stage2_tol,
            executor: Executor::Serial,
            qoi: None,
            provenance: String::new(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_executor(mut self, executor: Executor) -> Self {
        self.executor = executor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec.geom() != &self.plan.geom {
            return Err(Error::InvalidConfig(
                "subsample grid differs from plan grid".into(),
            ));
        }
        if !self.plan.geom.is_structured() && !self.spec.is_identity() {
            return Err(Error::UnstructuredNoInterp);
        }
        if self.stage1_rank == 0 {
            return Err(Error::InvalidConfig("stage-1 rank must be >= 1".into()));
        }
        if !(self.stage2_tol.is_finite() && self.stage2_tol >= 0.0) {
            return Err(Error::InvalidConfig(
                "stage-2 tolerance must be finite and >= 0".into(),
            ));
        }
        if self.executor == (Executor::Pool { workers: 0 }) {
            return Err(Error::InvalidConfig(
                "worker pool needs at least one worker".into(),
            ));
        }
        self.plan.blocks()?;
        Ok(())
    }

    fn interp_recipe(&self) -> InterpRecipe {
        if self.spec.is_identity() {
            InterpRecipe::Identity
        } else {
            InterpRecipe::Multilinear {
                scheme: Scheme::for_axes(self.plan.geom.axis_count()),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    SnapshotIngested { index: usize },
    ChunkClosed { block: usize, chunk: usize },
    Stage1Done { block: usize, chunk: usize },
    Stage2Done { block: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskEvent {
    pub kind: EventKind,
    /// Completion time since the run started.
    pub at: Duration,
    /// Time spent in the step that just completed (producer call or compute).
    pub busy: Duration,
}

impl TaskEvent {
    fn start(&self) -> Duration {
        self.at.saturating_sub(self.busy)
    }
}

/// Allocation accounting for retained snapshot data, in f64 values.
#[derive(Debug, Default)]
pub struct BufferLedger {
    fine_current: AtomicUsize,
    fine_peak: AtomicUsize,
    coarse_current: AtomicUsize,
    coarse_peak: AtomicUsize,
}

impl BufferLedger {
    fn acquire(current: &AtomicUsize, peak: &AtomicUsize, values: usize) {
        let now = current.fetch_add(values, Ordering::SeqCst) + values;
        peak.fetch_max(now, Ordering::SeqCst);
    }

    pub fn acquire_fine(&self, values: usize) {
        Self::acquire(&self.fine_current, &self.fine_peak, values);
    }

    pub fn release_fine(&self, values: usize) {
        self.fine_current.fetch_sub(values, Ordering::SeqCst);
    }

    pub fn acquire_coarse(&self, values: usize) {
        Self::acquire(&self.coarse_current, &self.coarse_peak, values);
    }

    pub fn release_coarse(&self, values: usize) {
        self.coarse_current.fetch_sub(values, Ordering::SeqCst);
    }

    pub fn report(&self) -> BufferReport {
        BufferReport {
            fine_peak: self.fine_peak.load(Ordering::SeqCst),
            coarse_peak: self.coarse_peak.load(Ordering::SeqCst),
            fine_limit: 0,
            coarse_limit: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferReport {
    pub fine_peak: usize,
    pub coarse_peak: usize,
    /// One snapshot: `m`.
    pub fine_limit: usize,
    /// Open buffer plus pending chunks for every block: `(1 + MAX_PENDING) · T · Σ m_c`.
    pub coarse_limit: usize,
}

impl BufferReport {
    pub fn within_limits(&self) -> bool {
        self.fine_peak <= self.fine_limit && self.coarse_peak <= self.coarse_limit
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub archive: Archive,
    pub events: Vec<TaskEvent>,
    pub buffers: BufferReport,
}

/// Snapshots of an in-memory matrix, one column at a time.
pub fn matrix_producer(a: &DenseMatrix) -> impl Iterator<Item = Result<Vec<f64>>> + '_ {
    a.columns().map(|c| Ok(c.to_vec()))
}

/// Analytic Taylor-Green snapshots at `t = j·dt`, generated on demand.
pub fn taylor_green_producer(params: TaylorGreenParams) -> impl Iterator<Item = Result<Vec<f64>>> {
    (0..params.n).map(move |j| taylor_green_snapshot(&params, j as f64 * params.dt))
}

/// Wraps a producer, sleeping before each snapshot to mimic solver time.
pub struct Throttled<I> {
    inner: I,
    delay: Duration,
}

impl<I> Throttled<I> {
    pub fn new(inner: I, delay: Duration) -> Self {
        Self { inner, delay }
    }
}

impl<I: Iterator> Iterator for Throttled<I> {
    type Item = I::Item;

    fn next(&mut self) -> Option<I::Item> {
        thread::sleep(self.delay);
        self.inner.next()
    }
}

struct BlockState {
    rows: Vec<usize>,
    spec: SubsampleSpec,
    buffer: Vec<f64>,
    pending: usize,
    chunks: Vec<Option<ChunkFactors>>,
}

struct Stage1Task {
    block: usize,
    chunk: usize,
    offset: usize,
    data: DenseMatrix,
}

struct Stage1Result {
    block: usize,
    chunk: usize,
    offset: usize,
    width: usize,
    rows: usize,
    factors: Result<Option<IdFactors>>,
}

struct Shared<'a> {
    start: Instant,
    events: &'a Mutex<Vec<TaskEvent>>,
    ledger: &'a BufferLedger,
    rank: usize,
}

impl Shared<'_> {
    fn log(&self, kind: EventKind, busy: Duration) {
        let at = self.start.elapsed();
        self.events
            .lock()
            .unwrap()
            .push(TaskEvent { kind, at, busy });
    }

    fn run_stage1(&self, task: Stage1Task) -> Stage1Result {
        let began = Instant::now();
        let (rows, width) = task.data.shape();
        let factors = stage1_compress(&task.data, self.rank);
        drop(task.data);
        self.ledger.release_coarse(rows * width);
        self.log(
            EventKind::Stage1Done {
                block: task.block,
                chunk: task.chunk,
            },
            began.elapsed(),
        );
        Stage1Result {
            block: task.block,
            chunk: task.chunk,
            offset: task.offset,
            width,
            rows,
            factors,
        }
    }
}

enum Dispatch<'a> {
    Serial,
    Pool {
        tasks: Option<Sender<Stage1Task>>,
        results: &'a Receiver<Stage1Result>,
    },
}

struct Ingest<'a, 's> {
    shared: &'s Shared<'a>,
    blocks: Vec<BlockState>,
    dispatch: Dispatch<'s>,
}

impl Ingest<'_, '_> {
    fn accept(&mut self, r: Stage1Result) -> Result<()> {
        let state = &mut self.blocks[r.block];
        state.pending -= 1;
        let factors = r.factors.map_err(|e| Error::Stage1Failed {
            block: r.block,
            chunk: r.chunk,
            source: Box::new(e),
        })?;
        if state.chunks.len() <= r.chunk {
            state.chunks.resize(r.chunk + 1, None);
        }
        state.chunks[r.chunk] = Some(ChunkFactors {
            offset: r.offset,
            width: r.width,
            rows: r.rows,
            factors,
        });
        Ok(())
    }

    fn wait_one(&mut self) -> Result<()> {
        let Dispatch::Pool { results, .. } = &self.dispatch else {
            unreachable!("serial dispatch never has pending chunks")
        };
        let r = results
            .recv()
            .map_err(|_| Error::InvalidConfig("stage-1 workers exited early".into()))?;
        self.accept(r)
    }

    fn close_chunk(&mut self, block: usize, chunk: usize, offset: usize) -> Result<()> {
        while self.blocks[block].pending >= MAX_PENDING_CHUNKS {
            self.wait_one()?;
        }
        let state = &mut self.blocks[block];
        let rows = state.spec.coarse_rows();
        let data = std::mem::take(&mut state.buffer);
        let width = data.len() / rows;
        let task = Stage1Task {
            block,
            chunk,
            offset,
            data: DenseMatrix::new(rows, width, data)?,
        };
        state.pending += 1;
        self.shared
            .log(EventKind::ChunkClosed { block, chunk }, Duration::ZERO);
        match &self.dispatch {
            Dispatch::Serial => {
                let r = self.shared.run_stage1(task);
                self.accept(r)
            }
            Dispatch::Pool { tasks, .. } => tasks
                .as_ref()
                .expect("task channel open during ingestion")
                .send(task)
                .map_err(|_| Error::InvalidConfig("stage-1 workers exited early".into())),
        }
    }

    fn ingest(
        &mut self,
        index: usize,
        snapshot: Vec<f64>,
        m: usize,
        chunk_width: usize,
    ) -> Result<()> {
        if snapshot.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "snapshot {index} has {} values, expected {m}",
                snapshot.len()
            )));
        }
        self.shared.ledger.acquire_fine(m);
        if snapshot.iter().any(|v| !v.is_finite()) {
            self.shared.ledger.release_fine(m);
            return Err(Error::NonFinite);
        }
        for state in &mut self.blocks {
            let before = state.buffer.len();
            for &local in state.spec.rows() {
                state.buffer.push(snapshot[state.rows[local]]);
            }
            self.shared
                .ledger
                .acquire_coarse(state.buffer.len() - before);
        }
        drop(snapshot);
        self.shared.ledger.release_fine(m);

        let count = index + 1;
        if count.is_multiple_of(chunk_width) {
            self.close_all(count / chunk_width - 1, count - chunk_width)?;
        }
        Ok(())
    }

    fn close_all(&mut self, chunk: usize, offset: usize) -> Result<()> {
        for b in 0..self.blocks.len() {
            self.close_chunk(b, chunk, offset)?;
        }
        Ok(())
    }

    fn drain(&mut self) -> Result<()> {
        if let Dispatch::Pool { tasks, .. } = &mut self.dispatch {
            tasks.take();
        }
        let mut first_err = None;
        while self.blocks.iter().any(|b| b.pending > 0) {
            if let Err(e) = self.wait_one() {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }
}

/// Runs the streaming compressor over `producer` and returns the archive,
/// the event log ordered by completion time, and buffer accounting.
pub fn run_pipeline<P>(producer: P, config: &StreamConfig) -> Result<PipelineOutput>
where
    P: IntoIterator<Item = Result<Vec<f64>>>,
{
    config.validate()?;
    let m = config.plan.geom.num_points();
    let chunk_width = config.plan.time_chunk;
    let plan_blocks = config.plan.blocks()?;
    let mut blocks = Vec::with_capacity(plan_blocks.len());
    for b in &plan_blocks {
        let spec = b.local_spec(&config.spec)?;
        blocks.push(BlockState {
            buffer: Vec::with_capacity(spec.coarse_rows() * chunk_width),
            rows: b.rows.clone(),
            spec,
            pending: 0,
            chunks: Vec::new(),
        });
    }
    let coarse_total: usize = blocks.iter().map(|b| b.spec.coarse_rows()).sum();

    let events = Mutex::new(Vec::new());
    let ledger = BufferLedger::default();
    let shared = Shared {
        start: Instant::now(),
        events: &events,
        ledger: &ledger,
        rank: config.stage1_rank,
    };

    let (ingested, blocks) = match config.executor {
        Executor::Serial => {
            let mut ingest = Ingest {
                shared: &shared,
                blocks,
                dispatch: Dispatch::Serial,
            };
            let n = stream(&mut ingest, producer, m, chunk_width)?;
            (n, ingest.blocks)
        }
        Executor::Pool { workers } => {
            let (task_tx, task_rx) = unbounded::<Stage1Task>();
            let (result_tx, result_rx) = unbounded::<Stage1Result>();
            thread::scope(|scope| {
                for _ in 0..workers {
                    let task_rx = task_rx.clone();
                    let result_tx = result_tx.clone();
                    let shared = &shared;
                    scope.spawn(move || {
                        for task in task_rx {
                            if result_tx.send(shared.run_stage1(task)).is_err() {
                                break;
                            }
                        }
                    });
                }
                drop(result_tx);
                let mut ingest = Ingest {
                    shared: &shared,
                    blocks,
                    dispatch: Dispatch::Pool {
                        tasks: Some(task_tx),
                        results: &result_rx,
                    },
                };
                let streamed = stream(&mut ingest, producer, m, chunk_width);
                let drained = ingest.drain();
                let n = streamed?;
                drained?;
                Ok::<_, Error>((n, ingest.blocks))
            })?
        }
    };

    let recipe = config.interp_recipe();
    let payloads = stage2_all(&shared, blocks, config)?;
    let archive = Archive {
        metadata: ArchiveMetadata {
            m,
            n: ingested,
            grid: config.plan.geom.clone(),
            blocks_per_axis: config.plan.blocks_per_axis.clone(),
            time_chunk: chunk_width,
            subsample: config.spec.clone(),
            stage1_rank: config.stage1_rank,
            stage2_tol: config.stage2_tol,
            interp: recipe,
            qoi: config.qoi.clone(),
            provenance: config.provenance.clone(),
        },
        blocks: payloads,
    };
    debug_assert!(archive.validate().is_ok());

    let mut events = events.into_inner().unwrap();
    events.sort_by_key(|e| e.at);
    let mut buffers = ledger.report();
    buffers.fine_limit = m;
    buffers.coarse_limit = (1 + MAX_PENDING_CHUNKS) * chunk_width * coarse_total;
    debug_assert!(buffers.within_limits(), "{buffers:?}");
    Ok(PipelineOutput {
        archive,
        events,
        buffers,
    })
}

fn stream<P>(ingest: &mut Ingest, producer: P, m: usize, chunk_width: usize) -> Result<usize>
where
    P: IntoIterator<Item = Result<Vec<f64>>>,
{
    let mut iter = producer.into_iter();
    let mut count = 0;
    loop {
        let began = Instant::now();
        let Some(next) = iter.next() else { break };
        let snapshot = next?;
        ingest.shared.log(
            EventKind::SnapshotIngested { index: count },
            began.elapsed(),
        );
        ingest.ingest(count, snapshot, m, chunk_width)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::ShortStream);
    }
    if count % chunk_width != 0 {
        let offset = count - count % chunk_width;
        ingest.close_all(count / chunk_width, offset)?;
    }
    Ok(count)
}

fn stage2_all(
    shared: &Shared,
    blocks: Vec<BlockState>,
    config: &StreamConfig,
) -> Result<Vec<BlockPayload>> {
    let workers = match config.executor {
        Executor::Serial => 1,
        Executor::Pool { workers } => workers.min(blocks.len()),
    };
    let jobs: Vec<(usize, Vec<ChunkFactors>)> = blocks
        .into_iter()
        .enumerate()
        .map(|(b, s)| {
            (
                b,
                s.chunks
                    .into_iter()
                    .map(|c| c.expect("every chunk completed"))
                    .collect(),
            )
        })
        .collect();
    let run = |(block, chunks): (usize, Vec<ChunkFactors>)| -> Result<BlockPayload> {
        let began = Instant::now();
        let two_stage =
            stage2_compress(chunks, config.stage2_tol).map_err(|e| Error::Stage2Failed {
                block,
                source: Box::new(e),
            })?;
        shared.log(EventKind::Stage2Done { block }, began.elapsed());
        let union_indices = two_stage.union_indices().to_vec();
        Ok(match two_stage.final_factors() {
            None => BlockPayload {
                union_indices,
                skeleton_indices: Vec::new(),
                factors: None,
            },
            Some(f) => BlockPayload {
                union_indices,
                skeleton_indices: f.skeleton_indices().to_vec(),
                factors: Some((f.skeleton().clone(), f.coeffs().clone())),
            },
        })
    };
    if workers <= 1 {
        return jobs.into_iter().map(run).collect();
    }
    let mut slots: Vec<Vec<(usize, Vec<ChunkFactors>)>> =
        (0..workers).map(|_| Vec::new()).collect();
    for (i, job) in jobs.into_iter().enumerate() {
        slots[i % workers].push(job);
    }
    let mut done: Vec<(usize, Result<BlockPayload>)> = thread::scope(|scope| {
        let handles: Vec<_> = slots
            .into_iter()
            .map(|slot| {
                let run = &run;
                scope.spawn(move || {
                    slot.into_iter()
                        .map(|job| (job.0, run(job)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("stage-2 worker panicked"))
            .collect()
    });
    done.sort_by_key(|d| d.0);
    done.into_iter().map(|d| d.1).collect()
}

/// Share of stage-1 compute time that overlapped with producer activity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub overlap_fraction: f64,
    pub stage1_busy: Duration,
    pub producer_busy: Duration,
}

pub fn overlap_report(events: &[TaskEvent]) -> Result<OverlapReport> {
    if events.is_empty() {
        return Err(Error::EmptyLog);
    }
    let producer: Vec<(Duration, Duration)> = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::SnapshotIngested { .. }))
        .map(|e| (e.start(), e.at))
        .collect();
    let stage1: Vec<(Duration, Duration)> = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Stage1Done { .. }))
        .map(|e| (e.start(), e.at))
        .collect();
    let stage1_busy: Duration = stage1.iter().map(|(s, e)| *e - *s).sum();
    let producer_busy: Duration = producer.iter().map(|(s, e)| *e - *s).sum();
    let overlapped: Duration = stage1
        .iter()
        .map(|&(s, e)| {
            producer
                .iter()
                .map(|&(ps, pe)| pe.min(e).saturating_sub(ps.max(s)))
                .sum::<Duration>()
        })
        .sum();
    let overlap_fraction = if stage1_busy.is_zero() {
        0.0
    } else {
        (overlapped.as_secs_f64() / stage1_busy.as_secs_f64()).min(1.0)
    };
    Ok(OverlapReport {
        overlap_fraction,
        stage1_busy,
        producer_busy,
    })
}
