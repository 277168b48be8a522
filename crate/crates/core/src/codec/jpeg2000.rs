//! In-memory JPEG 2000 (J2K codestream) over OpenJPEG, single component.

use std::os::raw::{c_char, c_void};
use std::ptr;

use openjpeg_sys as opj;

use crate::error::{Error, Result};

fn fail(reason: &str) -> Error {
    Error::Backend {
        codec: "jpeg2000",
        bin: None,
        reason: reason.into(),
    }
}

unsafe extern "C" fn quiet(_msg: *const c_char, _data: *mut c_void) {}

struct Sink {
    data: Vec<u8>,
    pos: usize,
}

unsafe extern "C" fn sink_write(buf: *mut c_void, n: usize, user: *mut c_void) -> usize {
    let s = &mut *(user as *mut Sink);
    let src = std::slice::from_raw_parts(buf as *const u8, n);
    let end = s.pos + n;
    if s.data.len() < end {
        s.data.resize(end, 0);
    }
    s.data[s.pos..end].copy_from_slice(src);
    s.pos = end;
    n
}

unsafe extern "C" fn sink_skip(n: i64, user: *mut c_void) -> i64 {
    let s = &mut *(user as *mut Sink);
    let target = s.pos as i64 + n;
    if target < 0 {
        return -1;
    }
    s.pos = target as usize;
    if s.data.len() < s.pos {
        s.data.resize(s.pos, 0);
    }
    n
}

unsafe extern "C" fn sink_seek(n: i64, user: *mut c_void) -> i32 {
    let s = &mut *(user as *mut Sink);
    if n < 0 {
        return 0;
    }
    s.pos = n as usize;
    if s.data.len() < s.pos {
        s.data.resize(s.pos, 0);
    }
    1
}

struct Source {
    data: *const u8,
    len: usize,
    pos: usize,
}

unsafe extern "C" fn source_read(buf: *mut c_void, n: usize, user: *mut c_void) -> usize {
    let s = &mut *(user as *mut Source);
    if s.pos >= s.len {
        return usize::MAX;
    }
    let k = n.min(s.len - s.pos);
    ptr::copy_nonoverlapping(s.data.add(s.pos), buf as *mut u8, k);
    s.pos += k;
    k
}

unsafe extern "C" fn source_skip(n: i64, user: *mut c_void) -> i64 {
    let s = &mut *(user as *mut Source);
    if n < 0 {
        let back = (-n) as usize;
        if back > s.pos {
            return -1;
        }
        s.pos -= back;
        return n;
    }
    if s.pos >= s.len {
        return -1;
    }
    let k = (n as usize).min(s.len - s.pos);
    s.pos += k;
    k as i64
}

unsafe extern "C" fn source_seek(n: i64, user: *mut c_void) -> i32 {
    let s = &mut *(user as *mut Source);
    if n < 0 || n as usize > s.len {
        return 0;
    }
    s.pos = n as usize;
    1
}

unsafe fn silence(codec: *mut opj::opj_codec_t) {
    opj::opj_set_info_handler(codec, Some(quiet), ptr::null_mut());
    opj::opj_set_warning_handler(codec, Some(quiet), ptr::null_mut());
    opj::opj_set_error_handler(codec, Some(quiet), ptr::null_mut());
}

/// Owns the three OpenJPEG handles and releases them on every exit path.
struct Handles {
    codec: *mut opj::opj_codec_t,
    stream: *mut opj::opj_stream_t,
    image: *mut opj::opj_image_t,
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            if !self.stream.is_null() {
                opj::opj_stream_destroy(self.stream);
            }
            if !self.codec.is_null() {
                opj::opj_destroy_codec(self.codec);
            }
            if !self.image.is_null() {
                opj::opj_image_destroy(self.image);
            }
        }
    }
}

/// Lossy irreversible (9/7) encode with a single quality layer at the given
/// compression ratio.
pub fn encode(samples: &[u16], width: u32, height: u32, bits: u8, ratio: f32) -> Result<Vec<u8>> {
    if samples.len() != width as usize * height as usize || samples.is_empty() {
        return Err(fail("sample count does not match dimensions"));
    }
    let bits = bits.clamp(1, 16) as u32;
    let mut sink = Box::new(Sink {
        data: Vec::new(),
        pos: 0,
    });
    unsafe {
        let mut params: opj::opj_cparameters_t = std::mem::zeroed();
        opj::opj_set_default_encoder_parameters(&mut params);
        params.tcp_numlayers = 1;
        params.tcp_rates[0] = ratio.max(1.0);
        params.cp_disto_alloc = 1;
        params.irreversible = 1;
        let min_side = width.min(height);
        let max_res = 32 - min_side.leading_zeros();
        params.numresolution = (max_res as i32).clamp(1, 6);

        let mut cmpt = opj::opj_image_cmptparm_t {
            dx: 1,
            dy: 1,
            w: width,
            h: height,
            x0: 0,
            y0: 0,
            prec: bits,
            bpp: bits,
            sgnd: 0,
        };
        let mut h = Handles {
            codec: ptr::null_mut(),
            stream: ptr::null_mut(),
            image: opj::opj_image_create(1, &mut cmpt, opj::COLOR_SPACE::OPJ_CLRSPC_GRAY),
        };
        if h.image.is_null() {
            return Err(fail("image allocation failed"));
        }
        let img = &mut *h.image;
        img.x0 = 0;
        img.y0 = 0;
        img.x1 = width;
        img.y1 = height;
        let data = std::slice::from_raw_parts_mut((*img.comps).data, samples.len());
        for (d, &s) in data.iter_mut().zip(samples) {
            *d = s as i32;
        }

        h.codec = opj::opj_create_compress(opj::CODEC_FORMAT::OPJ_CODEC_J2K);
        if h.codec.is_null() {
            return Err(fail("codec creation failed"));
        }
        silence(h.codec);
        if opj::opj_setup_encoder(h.codec, &mut params, h.image) == 0 {
            return Err(fail("encoder setup rejected parameters"));
        }
        h.stream = opj::opj_stream_create(1 << 16, 0);
        if h.stream.is_null() {
            return Err(fail("stream creation failed"));
        }
        opj::opj_stream_set_write_function(h.stream, Some(sink_write));
        opj::opj_stream_set_skip_function(h.stream, Some(sink_skip));
        opj::opj_stream_set_seek_function(h.stream, Some(sink_seek));
        opj::opj_stream_set_user_data(h.stream, &mut *sink as *mut Sink as *mut c_void, None);
        if opj::opj_start_compress(h.codec, h.image, h.stream) == 0
            || opj::opj_encode(h.codec, h.stream) == 0
            || opj::opj_end_compress(h.codec, h.stream) == 0
        {
            return Err(fail("encoding failed"));
        }
        drop(h);
    }
    Ok(sink.data)
}

/// Decodes a single-component codestream whose geometry must match the
/// expectation; samples are clamped to the stated depth.
pub fn decode(data: &[u8], width: u32, height: u32, bits: u8) -> Result<Vec<u16>> {
    let mut src = Box::new(Source {
        data: data.as_ptr(),
        len: data.len(),
        pos: 0,
    });
    let max = ((1u32 << bits.clamp(1, 16)) - 1) as i32;
    unsafe {
        let mut h = Handles {
            codec: opj::opj_create_decompress(opj::CODEC_FORMAT::OPJ_CODEC_J2K),
            stream: ptr::null_mut(),
            image: ptr::null_mut(),
        };
        if h.codec.is_null() {
            return Err(fail("codec creation failed"));
        }
        silence(h.codec);
        let mut params: opj::opj_dparameters_t = std::mem::zeroed();
        opj::opj_set_default_decoder_parameters(&mut params);
        if opj::opj_setup_decoder(h.codec, &mut params) == 0 {
            return Err(fail("decoder setup failed"));
        }
        h.stream = opj::opj_stream_create(1 << 16, 1);
        if h.stream.is_null() {
            return Err(fail("stream creation failed"));
        }
        opj::opj_stream_set_read_function(h.stream, Some(source_read));
        opj::opj_stream_set_skip_function(h.stream, Some(source_skip));
        opj::opj_stream_set_seek_function(h.stream, Some(source_seek));
        opj::opj_stream_set_user_data(h.stream, &mut *src as *mut Source as *mut c_void, None);
        opj::opj_stream_set_user_data_length(h.stream, data.len() as u64);

        if opj::opj_read_header(h.stream, h.codec, &mut h.image) == 0 || h.image.is_null() {
            return Err(fail("unreadable codestream header"));
        }
        let img = &*h.image;
        if img.numcomps != 1
            || img.x1.wrapping_sub(img.x0) != width
            || img.y1.wrapping_sub(img.y0) != height
        {
            return Err(fail("codestream geometry differs from the container"));
        }
        let comp = &*img.comps;
        if comp.dx != 1 || comp.dy != 1 || comp.prec > 16 || comp.sgnd != 0 {
            return Err(fail("unsupported component layout"));
        }
        if opj::opj_decode(h.codec, h.stream, h.image) == 0
            || opj::opj_end_decompress(h.codec, h.stream) == 0
        {
            return Err(fail("decoding failed"));
        }
        let comp = &*(*h.image).comps;
        if comp.data.is_null() || comp.w != width || comp.h != height {
            return Err(fail("decoded component has unexpected size"));
        }
        let n = width as usize * height as usize;
        let out = std::slice::from_raw_parts(comp.data, n)
            .iter()
            .map(|&v| v.clamp(0, max) as u16)
            .collect();
        Ok(out)
    }
}
