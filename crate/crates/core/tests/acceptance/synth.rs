//! Lazily generated corpus in the shape of the real one. Bytes are
//! produced on demand, so the generator itself holds one record at a time.

use std::io::{self, Read};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "adaptive", "graph", "neural", "retrieval", "citation", "learning", "secure", "stream",
    "query", "index", "model", "distributed", "semantic", "scalable", "robust", "network",
    "analysis", "optimal", "embedding", "system",
];
const NAMES: &[&str] = &[
    "Jos&eacute; Garc&iacute;a", "Anna M&uuml;ller", "Li Wei", "Sara Costa", "J&ouml;rg Weber",
    "Maria Rossi", "Kenji Sato", "Ola Nordmann",
];

pub struct SynthCorpus {
    rng: ChaCha8Rng,
    total: usize,
    next: usize,
    buf: Vec<u8>,
    pos: usize,
    closed: bool,
}

impl SynthCorpus {
    pub fn new(records: usize, seed: u64) -> Self {
        SynthCorpus {
            rng: ChaCha8Rng::seed_from_u64(seed),
            total: records,
            next: 0,
            buf: b"<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!DOCTYPE dblp SYSTEM \"dblp.dtd\">\n<dblp>\n".to_vec(),
            pos: 0,
            closed: false,
        }
    }

    fn fill(&mut self) {
        self.buf.clear();
        self.pos = 0;
        if self.next == self.total {
            if !self.closed {
                self.buf.extend_from_slice(b"</dblp>\n");
                self.closed = true;
            }
            return;
        }
        let i = self.next;
        self.next += 1;
        let rng = &mut self.rng;
        let element = match rng.random_range(0..10) {
            0..=4 => "inproceedings",
            5..=7 => "article",
            8 => "incollection",
            _ => "phdthesis",
        };
        let mut s = format!("<{element} mdate=\"2022-11-01\" key=\"conf/synth/R{i}\">\n");
        for _ in 0..rng.random_range(1..5) {
            let name = NAMES[rng.random_range(0..NAMES.len())];
            s.push_str(&format!("<author>{name}</author>\n"));
        }
        let words: Vec<&str> = (0..rng.random_range(3..12))
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect();
        s.push_str(&format!("<title>{} <i>{i}</i>.</title>\n", words.join(" ")));
        s.push_str(&format!("<year>{}</year>\n", rng.random_range(1990..2023)));
        s.push_str("<booktitle>SYNTH</booktitle>\n");
        if rng.random_bool(0.6) {
            s.push_str(&format!("<ee type=\"oa\">https://example.org/pdf/{i}.pdf</ee>\n"));
        }
        if rng.random_bool(0.5) {
            s.push_str(&format!("<ee>https://doi.org/10.5555/synth.{i}</ee>\n"));
        }
        s.push_str(&format!("<url>db/conf/synth/synth.html#R{i}</url>\n</{element}>\n"));
        self.buf.extend_from_slice(s.as_bytes());
    }
}

impl Read for SynthCorpus {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if self.pos == self.buf.len() {
            self.fill();
            if self.buf.is_empty() {
                return Ok(0);
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}
