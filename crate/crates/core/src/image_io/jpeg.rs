//! Baseline JPEG parser that stops before dequantization.
//!
//! Only sequential Huffman-coded 8-bit frames (SOF0/SOF1) with one or three
//! components are accepted. Restart markers and multi-scan sequential files
//! are handled.

use ndarray::Array2;

use super::{ComponentCoefficients, DctCoefficients, QTable, QTables};

/// Natural (row-major) index of the i-th coefficient in zig-zag order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

#[derive(thiserror::Error, Debug, Clone, PartialEq, Eq)]
pub enum JpegError {
    #[error("not a JPEG file")]
    NotAJpeg,
    #[error("unsupported JPEG: {0}")]
    UnsupportedJpeg(String),
    #[error("corrupt JPEG stream: {0}")]
    CorruptStream(String),
}

fn corrupt(msg: impl Into<String>) -> JpegError {
    JpegError::CorruptStream(msg.into())
}

#[derive(Clone)]
struct HuffmanTable {
    // Annex F.2.2.3 decoding tables, indexed by code length 1..=16.
    maxcode: [i32; 18],
    valptr: [i32; 17],
    mincode: [i32; 17],
    values: Vec<u8>,
}

impl HuffmanTable {
    fn new(counts: &[u8; 16], values: Vec<u8>) -> Result<Self, JpegError> {
        let total: usize = counts.iter().map(|&c| c as usize).sum();
        if total != values.len() || total > 256 {
            return Err(corrupt("invalid Huffman table size"));
        }
        let mut maxcode = [-1i32; 18];
        let mut valptr = [0i32; 17];
        let mut mincode = [0i32; 17];
        let mut code = 0i32;
        let mut k = 0i32;
        for len in 1..=16 {
            let n = counts[len - 1] as i32;
            if n > 0 {
                valptr[len] = k;
                mincode[len] = code;
                code += n;
                k += n;
                maxcode[len] = code - 1;
            }
            if code > (1 << len) {
                return Err(corrupt("Huffman code lengths overflow"));
            }
            code <<= 1;
        }
        // sentinel so the decode loop always terminates at length 17
        maxcode[17] = i32::MAX;
        Ok(Self {
            maxcode,
            valptr,
            mincode,
            values,
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct FrameComponent {
    id: u8,
    h: usize,
    v: usize,
    tq: u8,
}

struct Frame {
    width: usize,
    height: usize,
    components: Vec<FrameComponent>,
    hmax: usize,
    vmax: usize,
    mcus_x: usize,
    mcus_y: usize,
}

impl Frame {
    fn blocks_wide(&self, c: &FrameComponent) -> usize {
        (self.width * c.h).div_ceil(self.hmax).div_ceil(8)
    }

    fn blocks_high(&self, c: &FrameComponent) -> usize {
        (self.height * c.v).div_ceil(self.vmax).div_ceil(8)
    }
}

/// MSB-first reader over an entropy-coded segment; strips byte stuffing and
/// stops at the first marker.
struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    buffer: u32,
    bits: u32,
    marker: Option<u8>,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8], pos: usize) -> Self {
        Self {
            data,
            pos,
            buffer: 0,
            bits: 0,
            marker: None,
        }
    }

    fn fill(&mut self) -> Result<(), JpegError> {
        while self.bits <= 24 {
            let byte = if self.marker.is_some() {
                0
            } else {
                let Some(&b) = self.data.get(self.pos) else {
                    return Err(corrupt("unexpected end of entropy-coded data"));
                };
                if b == 0xFF {
                    let mut next = self.pos + 1;
                    while self.data.get(next) == Some(&0xFF) {
                        next += 1;
                    }
                    match self.data.get(next) {
                        Some(0x00) => {
                            self.pos = next + 1;
                            0xFF
                        }
                        Some(&m) => {
                            self.marker = Some(m);
                            self.pos = next + 1;
                            0
                        }
                        None => return Err(corrupt("unexpected end of entropy-coded data")),
                    }
                } else {
                    self.pos += 1;
                    b
                }
            };
            self.buffer |= u32::from(byte) << (24 - self.bits);
            self.bits += 8;
        }
        Ok(())
    }

    fn bit(&mut self) -> Result<u32, JpegError> {
        if self.bits == 0 {
            self.fill()?;
        }
        let b = self.buffer >> 31;
        self.buffer <<= 1;
        self.bits -= 1;
        Ok(b)
    }

    fn receive(&mut self, n: u32) -> Result<i32, JpegError> {
        if n == 0 {
            return Ok(0);
        }
        if self.bits < n {
            self.fill()?;
        }
        let v = self.buffer >> (32 - n);
        self.buffer <<= n;
        self.bits -= n;
        Ok(v as i32)
    }

    fn decode(&mut self, table: &HuffmanTable) -> Result<u8, JpegError> {
        let mut code = self.bit()? as i32;
        let mut len = 1;
        while code > table.maxcode[len] {
            code = (code << 1) | self.bit()? as i32;
            len += 1;
            if len > 16 {
                return Err(corrupt("invalid Huffman code"));
            }
        }
        let idx = table.valptr[len] + code - table.mincode[len];
        table
            .values
            .get(idx as usize)
            .copied()
            .ok_or_else(|| corrupt("Huffman value index out of range"))
    }

    /// Discards buffered bits and consumes the expected RSTn marker.
    fn restart(&mut self, expected: u8) -> Result<(), JpegError> {
        self.buffer = 0;
        self.bits = 0;
        let marker = match self.marker.take() {
            Some(m) => m,
            None => {
                // skip any padding up to the marker
                while self.data.get(self.pos) != Some(&0xFF) {
                    if self.pos >= self.data.len() {
                        return Err(corrupt("missing restart marker"));
                    }
                    self.pos += 1;
                }
                while self.data.get(self.pos) == Some(&0xFF) {
                    self.pos += 1;
                }
                let m = *self
                    .data
                    .get(self.pos)
                    .ok_or_else(|| corrupt("missing restart marker"))?;
                self.pos += 1;
                m
            }
        };
        if marker != expected {
            return Err(corrupt(format!(
                "expected RST{} marker, found 0x{marker:02X}",
                expected - 0xD0
            )));
        }
        Ok(())
    }

    /// Position just after the entropy-coded segment (at the next marker).
    fn end_position(&self) -> usize {
        if self.marker.is_some() {
            // pos points past the marker byte, rewind to the 0xFF
            self.pos - 2
        } else {
            let mut p = self.pos;
            while p + 1 < self.data.len() && !(self.data[p] == 0xFF && self.data[p + 1] != 0x00) {
                p += 1;
            }
            p
        }
    }
}

fn extend(v: i32, t: u32) -> i32 {
    if t == 0 {
        0
    } else if v < (1 << (t - 1)) {
        v - (1 << t) + 1
    } else {
        v
    }
}

fn read_u16(data: &[u8], pos: usize) -> Result<usize, JpegError> {
    match (data.get(pos), data.get(pos + 1)) {
        (Some(&a), Some(&b)) => Ok(((a as usize) << 8) | b as usize),
        _ => Err(corrupt("truncated segment")),
    }
}

struct Parser {
    qtables: QTables,
    dc_tables: [Option<HuffmanTable>; 4],
    ac_tables: [Option<HuffmanTable>; 4],
    restart_interval: usize,
    frame: Option<Frame>,
    // padded per-component planes, indexed like frame.components
    planes: Vec<Array2<i16>>,
    seen_scan: bool,
}

/// Parses a baseline JPEG held in memory.
pub fn parse_jpeg(data: &[u8]) -> Result<(DctCoefficients, QTables), JpegError> {
    if data.len() < 3 || data[0] != 0xFF || data[1] != 0xD8 {
        return Err(JpegError::NotAJpeg);
    }
    let mut parser = Parser {
        qtables: QTables::default(),
        dc_tables: Default::default(),
        ac_tables: Default::default(),
        restart_interval: 0,
        frame: None,
        planes: Vec::new(),
        seen_scan: false,
    };
    let mut pos = 2;
    loop {
        // find next marker, skipping fill bytes
        while data.get(pos) == Some(&0xFF) && data.get(pos + 1) == Some(&0xFF) {
            pos += 1;
        }
        if data.get(pos) != Some(&0xFF) {
            return Err(corrupt(format!("expected marker at offset {pos}")));
        }
        let marker = *data.get(pos + 1).ok_or_else(|| corrupt("truncated file"))?;
        pos += 2;
        match marker {
            0xD8 => return Err(corrupt("unexpected SOI")),
            0xD9 => break,
            0xD0..=0xD7 | 0x01 => continue,
            _ => {}
        }
        let len = read_u16(data, pos)?;
        if len < 2 || pos + len > data.len() {
            return Err(corrupt(format!("bad length for marker 0x{marker:02X}")));
        }
        let segment = &data[pos + 2..pos + len];
        match marker {
            0xDB => parser.read_dqt(segment)?,
            0xC4 => parser.read_dht(segment)?,
            0xDD => {
                if segment.len() < 2 {
                    return Err(corrupt("short DRI segment"));
                }
                parser.restart_interval = read_u16(segment, 0)?;
            }
            0xC0 | 0xC1 => parser.read_sof(segment)?,
            0xC2 | 0xC6 | 0xCA | 0xCE => {
                return Err(JpegError::UnsupportedJpeg("progressive coding".into()))
            }
            0xC3 | 0xC7 | 0xCB | 0xCF => {
                return Err(JpegError::UnsupportedJpeg("lossless coding".into()))
            }
            0xC5 => return Err(JpegError::UnsupportedJpeg("hierarchical coding".into())),
            0xC9 => return Err(JpegError::UnsupportedJpeg("arithmetic coding".into())),
            0xCC => return Err(JpegError::UnsupportedJpeg("arithmetic coding".into())),
            0xDA => {
                pos = parser.read_scan(data, pos, segment)?;
                continue;
            }
            0xDC => return Err(JpegError::UnsupportedJpeg("DNL marker".into())),
            _ => {} // APPn, COM and friends
        }
        pos += len;
    }
    parser.finish()
}

impl Parser {
    fn read_dqt(&mut self, mut seg: &[u8]) -> Result<(), JpegError> {
        while !seg.is_empty() {
            let pq = seg[0] >> 4;
            let tq = (seg[0] & 0x0F) as usize;
            if tq > 3 {
                return Err(corrupt("quantization table id > 3"));
            }
            let (size, wide) = match pq {
                0 => (64, false),
                1 => (128, true),
                _ => return Err(corrupt("bad quantization table precision")),
            };
            if seg.len() < 1 + size {
                return Err(corrupt("short DQT segment"));
            }
            let mut table = [0u16; 64];
            for (k, &natural) in ZIGZAG.iter().enumerate() {
                let v = if wide {
                    u16::from_be_bytes([seg[1 + 2 * k], seg[2 + 2 * k]])
                } else {
                    u16::from(seg[1 + k])
                };
                if v == 0 {
                    return Err(corrupt("zero quantization step"));
                }
                table[natural] = v;
            }
            self.qtables.set(tq, QTable::new(table));
            seg = &seg[1 + size..];
        }
        Ok(())
    }

    fn read_dht(&mut self, mut seg: &[u8]) -> Result<(), JpegError> {
        while !seg.is_empty() {
            if seg.len() < 17 {
                return Err(corrupt("short DHT segment"));
            }
            let class = seg[0] >> 4;
            let id = (seg[0] & 0x0F) as usize;
            if class > 1 || id > 3 {
                return Err(corrupt("bad Huffman table class/id"));
            }
            let mut counts = [0u8; 16];
            counts.copy_from_slice(&seg[1..17]);
            let total: usize = counts.iter().map(|&c| c as usize).sum();
            if seg.len() < 17 + total {
                return Err(corrupt("short DHT segment"));
            }
            let table = HuffmanTable::new(&counts, seg[17..17 + total].to_vec())?;
            if class == 0 {
                self.dc_tables[id] = Some(table);
            } else {
                self.ac_tables[id] = Some(table);
            }
            seg = &seg[17 + total..];
        }
        Ok(())
    }

    fn read_sof(&mut self, seg: &[u8]) -> Result<(), JpegError> {
        if self.frame.is_some() {
            return Err(corrupt("multiple frames"));
        }
        if seg.len() < 6 {
            return Err(corrupt("short SOF segment"));
        }
        if seg[0] != 8 {
            return Err(JpegError::UnsupportedJpeg(format!(
                "{}-bit sample precision",
                seg[0]
            )));
        }
        let height = read_u16(seg, 1)?;
        let width = read_u16(seg, 3)?;
        let n = seg[5] as usize;
        if height == 0 {
            return Err(JpegError::UnsupportedJpeg("height defined by DNL".into()));
        }
        if width == 0 {
            return Err(corrupt("zero image width"));
        }
        if n != 1 && n != 3 {
            return Err(JpegError::UnsupportedJpeg(format!("{n} components")));
        }
        if seg.len() < 6 + 3 * n {
            return Err(corrupt("short SOF segment"));
        }
        let mut components = Vec::with_capacity(n);
        for i in 0..n {
            let c = &seg[6 + 3 * i..9 + 3 * i];
            let (h, v) = ((c[1] >> 4) as usize, (c[1] & 0x0F) as usize);
            if !(1..=4).contains(&h) || !(1..=4).contains(&v) || c[2] > 3 {
                return Err(corrupt("bad component parameters"));
            }
            if components.iter().any(|fc: &FrameComponent| fc.id == c[0]) {
                return Err(corrupt("duplicate component id"));
            }
            components.push(FrameComponent {
                id: c[0],
                h,
                v,
                tq: c[2],
            });
        }
        let hmax = components.iter().map(|c| c.h).max().unwrap_or(1);
        let vmax = components.iter().map(|c| c.v).max().unwrap_or(1);
        let mcus_x = width.div_ceil(8 * hmax);
        let mcus_y = height.div_ceil(8 * vmax);
        self.planes = components
            .iter()
            .map(|c| Array2::zeros((mcus_y * c.v * 8, mcus_x * c.h * 8)))
            .collect();
        self.frame = Some(Frame {
            width,
            height,
            components,
            hmax,
            vmax,
            mcus_x,
            mcus_y,
        });
        Ok(())
    }

    /// Decodes one scan; returns the position of the marker that follows it.
    fn read_scan(&mut self, data: &[u8], pos: usize, seg: &[u8]) -> Result<usize, JpegError> {
        let frame = self
            .frame
            .as_ref()
            .ok_or_else(|| corrupt("scan before frame header"))?;
        let ns = *seg.first().ok_or_else(|| corrupt("empty SOS"))? as usize;
        if ns == 0 || ns > 4 || seg.len() < 1 + 2 * ns + 3 {
            return Err(corrupt("bad SOS segment"));
        }
        let mut scan = Vec::with_capacity(ns);
        for i in 0..ns {
            let sel = seg[1 + 2 * i];
            let tables = seg[2 + 2 * i];
            let idx = frame
                .components
                .iter()
                .position(|c| c.id == sel)
                .ok_or_else(|| corrupt("scan references unknown component"))?;
            let (td, ta) = ((tables >> 4) as usize, (tables & 0x0F) as usize);
            if td > 3 || ta > 3 {
                return Err(corrupt("bad Huffman table selector"));
            }
            scan.push((idx, td, ta));
        }
        let (ss, se, a) = (seg[1 + 2 * ns], seg[2 + 2 * ns], seg[3 + 2 * ns]);
        if ss != 0 || se != 63 || a != 0 {
            return Err(JpegError::UnsupportedJpeg(
                "spectral selection or successive approximation".into(),
            ));
        }
        let mut dc = Vec::with_capacity(ns);
        let mut ac = Vec::with_capacity(ns);
        for &(_, td, ta) in &scan {
            dc.push(
                self.dc_tables[td]
                    .clone()
                    .ok_or_else(|| corrupt("missing DC Huffman table"))?,
            );
            ac.push(
                self.ac_tables[ta]
                    .clone()
                    .ok_or_else(|| corrupt("missing AC Huffman table"))?,
            );
        }

        // blocks visited by the scan, in MCU order
        let mut units: Vec<Vec<(usize, usize, usize)>> = Vec::new();
        if ns == 1 {
            let (ci, _, _) = scan[0];
            let c = &frame.components[ci];
            for by in 0..frame.blocks_high(c) {
                for bx in 0..frame.blocks_wide(c) {
                    units.push(vec![(0, by, bx)]);
                }
            }
        } else {
            for my in 0..frame.mcus_y {
                for mx in 0..frame.mcus_x {
                    let mut mcu = Vec::new();
                    for (si, &(ci, _, _)) in scan.iter().enumerate() {
                        let c = &frame.components[ci];
                        for v in 0..c.v {
                            for h in 0..c.h {
                                mcu.push((si, my * c.v + v, mx * c.h + h));
                            }
                        }
                    }
                    units.push(mcu);
                }
            }
        }

        let mut reader = BitReader::new(data, pos + 2 + seg.len());
        let mut pred = vec![0i32; ns];
        let mut next_rst = 0u8;
        let mut block = [0i16; 64];
        for (n, mcu) in units.iter().enumerate() {
            if self.restart_interval > 0 && n > 0 && n % self.restart_interval == 0 {
                reader.restart(0xD0 + next_rst)?;
                next_rst = (next_rst + 1) % 8;
                pred.iter_mut().for_each(|p| *p = 0);
            }
            for &(si, by, bx) in mcu {
                decode_block(&mut reader, &dc[si], &ac[si], &mut pred[si], &mut block)?;
                let plane = &mut self.planes[scan[si].0];
                for (k, &value) in block.iter().enumerate() {
                    plane[[by * 8 + k / 8, bx * 8 + k % 8]] = value;
                }
            }
        }
        self.seen_scan = true;
        Ok(reader.end_position())
    }

    fn finish(self) -> Result<(DctCoefficients, QTables), JpegError> {
        let frame = self.frame.ok_or_else(|| corrupt("no frame header"))?;
        if !self.seen_scan {
            return Err(corrupt("no scan data"));
        }
        let mut components = Vec::with_capacity(frame.components.len());
        for (c, plane) in frame.components.iter().zip(self.planes) {
            if self.qtables.get(c.tq as usize).is_none() {
                return Err(corrupt(format!("missing quantization table {}", c.tq)));
            }
            let rows = frame.blocks_high(c) * 8;
            let cols = frame.blocks_wide(c) * 8;
            let coefficients = plane.slice(ndarray::s![..rows, ..cols]).to_owned();
            components.push(ComponentCoefficients {
                id: c.id,
                sampling: (c.h as u8, c.v as u8),
                qtable_id: c.tq,
                coefficients,
            });
        }
        Ok((
            DctCoefficients {
                width: frame.width,
                height: frame.height,
                components,
            },
            self.qtables,
        ))
    }
}

fn decode_block(
    reader: &mut BitReader<'_>,
    dc: &HuffmanTable,
    ac: &HuffmanTable,
    pred: &mut i32,
    block: &mut [i16; 64],
) -> Result<(), JpegError> {
    block.fill(0);
    let t = u32::from(reader.decode(dc)?);
    if t > 11 {
        return Err(corrupt("DC magnitude category out of range"));
    }
    let diff = extend(reader.receive(t)?, t);
    *pred += diff;
    block[0] = i16::try_from(*pred).map_err(|_| corrupt("DC coefficient overflow"))?;
    let mut k = 1;
    while k < 64 {
        let rs = reader.decode(ac)?;
        let (r, s) = ((rs >> 4) as usize, u32::from(rs & 0x0F));
        if s == 0 {
            if r == 15 {
                k += 16;
                continue;
            }
            break;
        }
        k += r;
        if k > 63 {
            return Err(corrupt("AC coefficient index out of range"));
        }
        block[ZIGZAG[k]] = extend(reader.receive(s)?, s) as i16;
        k += 1;
    }
    if k > 64 {
        return Err(corrupt("AC run past end of block"));
    }
    Ok(())
}
