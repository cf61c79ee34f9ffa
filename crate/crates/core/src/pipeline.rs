//! Request ingestion, response assembly, and ordered release.
//!
//! Devices may complete out of order; the reorder stage matches each
//! completed response to its issue-order tag and releases responses only as
//! an unbroken prefix, so the host sees them in exactly arrival order.

use crate::model::{Cycles, MemoryRequest, Op, Response, SubRequest, Tag};
use crate::model::split_request;
use crate::util::SeqHashMap;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineFault {
    #[error("completion for unknown tag {0}")]
    UnknownTag(Tag),
    #[error("duplicate completion for tag {0} sub {1}")]
    DuplicateCompletion(Tag, u32),
}

#[derive(Debug, Clone, Copy)]
pub struct Header {
    pub tag: Tag,
    pub op: Op,
    pub addr: u64,
    pub size: u32,
}

/// Assembly state for one in-flight request.
#[derive(Debug)]
struct Pending {
    op: Op,
    size: u32,
    /// Bitmask of completed sub-requests; requests split at page (and only
    /// page) boundaries, so two bits suffice, 128 leaves margin.
    subs_done: u128,
    subs_total: u32,
    remaining: u32,
    data: Option<Vec<u8>>,
    latest_completion: Cycles,
    /// Posted writes are acknowledged at issue; the response is staged
    /// immediately and device completion only finishes the bookkeeping.
    acked: bool,
}

/// Completed responses waiting for their turn at the release cursor.
#[derive(Debug, Default)]
pub struct ReorderBuffer {
    ready: SeqHashMap<Tag, Response>,
    release_cursor: Tag,
    pub highwater: usize,
}

impl ReorderBuffer {
    pub fn insert(&mut self, resp: Response) {
        self.ready.insert(resp.tag, resp);
        self.highwater = self.highwater.max(self.ready.len());
    }

    pub fn len(&self) -> usize {
        self.ready.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ready.is_empty()
    }

    /// Pops the unbroken prefix of completed tags starting at the cursor.
    pub fn drain_ready(&mut self) -> Vec<Response> {
        let mut out = Vec::new();
        while let Some(resp) = self.ready.remove(&self.release_cursor) {
            out.push(resp);
            self.release_cursor += 1;
        }
        out
    }
}

#[derive(Debug)]
pub struct Pipeline {
    header_fifo: VecDeque<Header>,
    pending: SeqHashMap<Tag, Pending>,
    reorder: ReorderBuffer,
    next_tag: Tag,
    posted_writes: bool,
    page_size: u64,
}

/// What ingestion produced: the assigned tag and the page-local slices to
/// route.
#[derive(Debug)]
pub struct Ingest {
    pub tag: Tag,
    pub subs: Vec<SubRequest>,
}

impl Pipeline {
    pub fn new(page_size: u64, posted_writes: bool) -> Pipeline {
        Pipeline {
            header_fifo: VecDeque::new(),
            pending: SeqHashMap::default(),
            reorder: ReorderBuffer::default(),
            next_tag: 0,
            posted_writes,
            page_size,
        }
    }

    /// Tags the request in arrival order, stores its header, and splits it
    /// at page boundaries.
    pub fn ingest(&mut self, op: Op, addr: u64, size: u32, arrival: Cycles) -> Ingest {
        let tag = self.next_tag;
        self.next_tag += 1;
        self.header_fifo.push_back(Header { tag, op, addr, size });
        let req = MemoryRequest {
            op,
            addr: crate::model::HostAddress(addr),
            size,
            arrival,
            tag,
            payload: None,
        };
        let subs = split_request(&req, self.page_size);
        let subs_total = subs.len() as u32;
        assert!(subs_total <= 128, "request splits into too many page slices");
        let acked = self.posted_writes && op == Op::Write;
        self.pending.insert(
            tag,
            Pending {
                op,
                size,
                subs_done: 0,
                subs_total,
                remaining: subs_total,
                data: None,
                latest_completion: 0,
                acked,
            },
        );
        if acked {
            self.reorder.insert(Response {
                tag,
                op,
                data: None,
                completion: arrival,
            });
        }
        Ingest { tag, subs }
    }

    /// Records one sub-request's device completion; when the whole request
    /// is complete, the assembled response enters the reorder buffer.
    /// Returns whether this call assembled the full request.
    pub fn complete(
        &mut self,
        tag: Tag,
        sub_index: u32,
        parent_offset: u32,
        data: Option<Vec<u8>>,
        completion: Cycles,
    ) -> Result<bool, PipelineFault> {
        let pending = self.pending.get_mut(&tag).ok_or(PipelineFault::UnknownTag(tag))?;
        if sub_index >= pending.subs_total {
            return Err(PipelineFault::UnknownTag(tag));
        }
        let bit = 1u128 << sub_index;
        if pending.subs_done & bit != 0 {
            return Err(PipelineFault::DuplicateCompletion(tag, sub_index));
        }
        pending.subs_done |= bit;
        pending.remaining -= 1;
        pending.latest_completion = pending.latest_completion.max(completion);
        if let Some(bytes) = data {
            if pending.subs_total == 1 {
                pending.data = Some(bytes);
            } else {
                let buf = pending
                    .data
                    .get_or_insert_with(|| vec![0u8; pending.size as usize]);
                let at = parent_offset as usize;
                buf[at..at + bytes.len()].copy_from_slice(&bytes);
            }
        }
        if pending.remaining > 0 {
            return Ok(false);
        }
        let pending = self.pending.remove(&tag).unwrap();
        if !pending.acked {
            self.reorder.insert(Response {
                tag,
                op: pending.op,
                data: pending.data,
                completion: pending.latest_completion,
            });
        }
        Ok(true)
    }

    pub fn reorder_len(&self) -> usize {
        self.reorder.len()
    }

    /// Releases every response whose tag extends the unbroken prefix from
    /// the release cursor, popping the matching headers.
    pub fn drain(&mut self) -> Vec<Response> {
        let out = self.reorder.drain_ready();
        for _ in &out {
            self.header_fifo.pop_front();
        }
        out
    }

    /// Ingested requests that have not been released yet.
    pub fn in_flight(&self) -> usize {
        self.header_fifo.len()
    }

    pub fn reorder_highwater(&self) -> usize {
        self.reorder.highwater
    }

    pub fn issued(&self) -> Tag {
        self.next_tag
    }
}
