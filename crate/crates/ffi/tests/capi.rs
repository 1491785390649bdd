use std::ffi::{CStr, CString};
use std::ptr;

use slicereg::geom::{MaskStack, TransformParams};
use slicereg::phantom::{generate_phantom, PhantomSpec};
use slicereg_ffi::*;

fn last_error() -> String {
    let p = sr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn stack_handle(stack: &MaskStack) -> *mut SrStack {
    let (w, h) = (stack.width(), stack.height());
    let data: Vec<u8> = stack.masks().iter().flat_map(|m| m.data().iter().copied()).collect();
    let mut out = ptr::null_mut();
    let st = unsafe { sr_stack_from_data(w, h, stack.len(), data.as_ptr(), stack.slice_indices().as_ptr(), &mut out) };
    assert_eq!(st, SrStatus::Ok);
    out
}

#[test]
fn register_phantom_through_c_api() {
    let ph = generate_phantom(&PhantomSpec::default()).unwrap();
    let dims = ph.occupancy.dims();
    let mut vol = ptr::null_mut();
    let st = unsafe { sr_volume_from_data(dims.as_ptr(), 1.0, ph.occupancy.data().as_ptr(), &mut vol) };
    assert_eq!(st, SrStatus::Ok);
    let stack = stack_handle(&ph.stack);
    assert_eq!(unsafe { sr_stack_len(stack) }, ph.stack.len());

    let mut t = ptr::null_mut();
    assert_eq!(unsafe { sr_register(stack, vol, ptr::null(), &mut t) }, SrStatus::Ok);
    let mut p = [0.0; 6];
    assert_eq!(unsafe { sr_transform_params(t, p.as_mut_ptr()) }, SrStatus::Ok);
    let truth = &ph.theta;
    assert!((p[3] - truth.scaling).abs() < 0.01 * truth.scaling, "{p:?}");
    assert!((p[4] - truth.spacing).abs() < 0.02 * truth.spacing, "{p:?}");

    assert_eq!(unsafe { sr_transform_slice_count(t) }, ph.stack.len());
    let (mut idx, mut x, mut y) = (0i64, 0.0, 0.0);
    assert_eq!(unsafe { sr_transform_slice_offset(t, 2, &mut idx, &mut x, &mut y) }, SrStatus::Ok);
    assert_eq!(idx, ph.stack.slice_indices()[2]);
    assert_eq!(unsafe { sr_transform_slice_offset(t, 99, &mut idx, &mut x, &mut y) }, SrStatus::InvalidInput);

    let mut cost = -1.0;
    assert_eq!(unsafe { sr_cost(stack, vol, t, 1, &mut cost) }, SrStatus::Ok);
    assert!((0.0..0.01).contains(&cost), "{cost}");

    let (mut flagged, mut class) = (usize::MAX, -1);
    assert_eq!(unsafe { sr_intersect(stack, t, &mut flagged, &mut class) }, SrStatus::Ok);
    assert_eq!((flagged, class), (0, 0));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("theta.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sr_transform_write(t, path.as_ptr()) }, SrStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { sr_transform_read(path.as_ptr(), &mut back) }, SrStatus::Ok);
    let mut q = [0.0; 6];
    unsafe { sr_transform_params(back, q.as_mut_ptr()) };
    assert_eq!(p, q);

    unsafe {
        sr_transform_free(back);
        sr_transform_free(t);
        sr_stack_free(stack);
        sr_volume_free(vol);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut vol = ptr::null_mut();
    let missing = CString::new("/nonexistent/ct.mhd").unwrap();
    assert_eq!(unsafe { sr_volume_read(missing.as_ptr(), &mut vol) }, SrStatus::Io);
    assert!(last_error().contains("/nonexistent/ct.mhd"));
    assert!(vol.is_null());

    assert_eq!(unsafe { sr_volume_read(ptr::null(), &mut vol) }, SrStatus::NullPointer);
    assert!(last_error().contains("null"));

    let mut t = ptr::null_mut();
    assert_eq!(unsafe { sr_register(ptr::null(), ptr::null(), ptr::null(), &mut t) }, SrStatus::NullPointer);

    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { sr_config_default(&mut cfg) }, SrStatus::Ok);
    assert_eq!(unsafe { sr_config_set_stride(cfg, 0) }, SrStatus::InvalidInput);
    assert_eq!(unsafe { sr_config_set_stride(cfg, 2) }, SrStatus::Ok);
    unsafe { sr_config_free(cfg) };

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[joint]\nstrid = 2\n").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sr_config_read(bad.as_ptr(), &mut cfg) }, SrStatus::Format);
    assert!(last_error().contains("strid"));

    unsafe {
        sr_volume_free(ptr::null_mut());
        sr_stack_free(ptr::null_mut());
        sr_transform_free(ptr::null_mut());
        sr_config_free(ptr::null_mut());
    }
    assert_eq!(unsafe { sr_stack_len(ptr::null()) }, 0);
}

#[test]
fn cost_rejects_unbound_transform() {
    let ph = generate_phantom(&PhantomSpec::default()).unwrap();
    let stack = stack_handle(&ph.stack);
    let dims = ph.occupancy.dims();
    let mut vol = ptr::null_mut();
    unsafe { sr_volume_from_data(dims.as_ptr(), 1.0, ph.occupancy.data().as_ptr(), &mut vol) };
    let single = ph.stack.select(&[0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.json");
    slicereg::io::write_theta(&path, &[TransformParams::for_stack(&single, 1.0, 4.0, 0.0)]).unwrap();
    let path = CString::new(path.to_str().unwrap()).unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { sr_transform_read(path.as_ptr(), &mut t) }, SrStatus::Ok);
    let mut cost = 0.0;
    assert_eq!(unsafe { sr_cost(stack, vol, t, 1, &mut cost) }, SrStatus::ParameterBinding);
    unsafe {
        sr_transform_free(t);
        sr_stack_free(stack);
        sr_volume_free(vol);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/slicereg.h")).unwrap();
    for name in ["sr_register", "sr_last_error", "sr_volume_free", "SR_STATUS_DIVERGED", "typedef struct SrTransform SrTransform"] {
        assert!(header.contains(name), "{name}");
    }
    let v = unsafe { CStr::from_ptr(sr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
