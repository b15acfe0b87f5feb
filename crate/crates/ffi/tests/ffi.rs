use std::ffi::{CStr, CString};
use std::fs;
use std::ptr;

use modalign::data::{Dataset, EmbeddingRecord};
use modalign::model::{convert, embed, save_checkpoint, Modality, ModelConfig, ModelParams};
use modalign::numerics::Tensor;
use modalign_ffi::*;

fn last_error() -> String {
    let p = maln_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cpath(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    params: ModelParams,
    model: *mut MalnModel,
    gallery: *mut MalnDataset,
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            maln_model_free(self.model);
            maln_dataset_free(self.gallery);
        }
    }
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let params = ModelParams::init(&ModelConfig { table_init_scale: 0.5, ..ModelConfig::new(4, 3) }, 2).unwrap();
    save_checkpoint(&params, dir.path().join("m.bin")).unwrap();
    let records = (0..5)
        .map(|i| EmbeddingRecord {
            id: format!("p{i}"),
            class_id: i % 2,
            modality: Modality::Photo,
            features: (0..4).map(|j| ((i * 4 + j) as f64 * 0.7).sin()).collect(),
            pair_id: None,
        })
        .collect();
    fs::write(dir.path().join("g.maeb"), Dataset::new(4, records).unwrap().to_text()).unwrap();

    let mut model = ptr::null_mut();
    let mut gallery = ptr::null_mut();
    unsafe {
        assert_eq!(maln_model_load(cpath(&dir.path().join("m.bin")).as_ptr(), &mut model), MalnStatus::Ok);
        assert_eq!(maln_dataset_load(cpath(&dir.path().join("g.maeb")).as_ptr(), &mut gallery), MalnStatus::Ok);
    }
    Fixture {
        _dir: dir,
        params,
        model,
        gallery,
    }
}

#[test]
fn handles_report_shapes() {
    let f = fixture();
    unsafe {
        assert_eq!(maln_model_dim(f.model), 3);
        assert_eq!(maln_model_input_dim(f.model, MalnModality::Sketch), 4);
        assert_eq!(maln_dataset_len(f.gallery), 5);
        assert_eq!(maln_dataset_dim(f.gallery), 4);
        assert_eq!(maln_model_dim(ptr::null()), 0);
        assert_eq!(maln_dataset_len(ptr::null()), 0);
    }
    let v = unsafe { CStr::from_ptr(maln_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn embed_and_convert_match_the_library() {
    let f = fixture();
    let x = [0.3, -0.2, 1.1, 0.0];
    let mut z = [0.0; 3];
    let mut c = [0.0; 3];
    unsafe {
        assert_eq!(maln_embed(f.model, MalnModality::Sketch, x.as_ptr(), 4, z.as_mut_ptr(), 3), MalnStatus::Ok);
        assert_eq!(
            maln_convert(f.model, MalnModality::Sketch, MalnModality::Photo, z.as_ptr(), 3, c.as_mut_ptr(), 3),
            MalnStatus::Ok
        );
    }
    let want = embed(&f.params, &Tensor::vector(x.to_vec()).unwrap(), Modality::Sketch).unwrap();
    assert_eq!(&z[..], want.data());
    let want = convert(&want, Modality::Sketch, Modality::Photo, &f.params.table).unwrap();
    assert_eq!(&c[..], want.data());

    let mut m = [0.0; 3];
    unsafe {
        assert_eq!(maln_modality_encoding(f.model, MalnModality::Text, m.as_mut_ptr(), 3), MalnStatus::Ok);
    }
    assert_eq!(&m[..], f.params.table.encoding(Modality::Text));

    let mut s = [0.0; 3];
    unsafe {
        assert_eq!(maln_semantic(f.model, MalnModality::Sketch, z.as_ptr(), 3, s.as_mut_ptr(), 3), MalnStatus::Ok);
    }
    assert!((s.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn rank_is_a_permutation_and_matches_retrieval() {
    let f = fixture();
    let x = [0.3, -0.2, 1.1, 0.0];
    let mut order = [usize::MAX; 5];
    unsafe {
        assert_eq!(
            maln_rank(f.model, f.gallery, x.as_ptr(), 4, MalnVariant::Converted, order.as_mut_ptr(), 5),
            MalnStatus::Ok
        );
    }
    let mut sorted = order;
    sorted.sort();
    assert_eq!(sorted, [0, 1, 2, 3, 4]);

    let gallery = modalign::data::ingest(f._dir.path().join("g.maeb")).unwrap();
    let index = modalign::retrieval::build_index(&gallery, &f.params, modalign::retrieval::Variant::Converted).unwrap();
    let q = EmbeddingRecord {
        id: "q".into(),
        class_id: 0,
        modality: Modality::Sketch,
        features: x.to_vec(),
        pair_id: None,
    };
    let qe = modalign::retrieval::query_embeddings(&[&q], 4, &f.params, modalign::retrieval::Variant::Converted).unwrap();
    assert_eq!(order.to_vec(), index.rank(qe.row(0)).unwrap());
}

#[test]
fn errors_set_status_and_message() {
    let f = fixture();
    let x = [1.0; 4];
    let mut small = [0.0; 2];
    unsafe {
        let st = maln_embed(f.model, MalnModality::Photo, x.as_ptr(), 4, small.as_mut_ptr(), 2);
        assert_eq!(st, MalnStatus::BufferTooSmall);
        assert!(last_error().contains("3 needed"));

        let st = maln_embed(f.model, MalnModality::Photo, x.as_ptr(), 3, small.as_mut_ptr(), 3);
        assert_eq!(st, MalnStatus::ShapeMismatch);

        let st = maln_embed(ptr::null(), MalnModality::Photo, x.as_ptr(), 4, small.as_mut_ptr(), 3);
        assert_eq!(st, MalnStatus::NullPointer);

        let mut z = [0.0; 3];
        let st = maln_semantic(f.model, MalnModality::Sketch, f.params.table.encoding(Modality::Sketch).as_ptr(), 3, z.as_mut_ptr(), 3);
        assert_eq!(st, MalnStatus::DegenerateVector);

        let mut model = ptr::null_mut();
        let missing = CString::new("/nonexistent/m.bin").unwrap();
        assert_eq!(maln_model_load(missing.as_ptr(), &mut model), MalnStatus::Io);
        assert!(model.is_null());
        assert!(last_error().contains("/nonexistent/m.bin"));

        let mut order = [0usize; 5];
        let st = maln_rank(f.model, ptr::null(), x.as_ptr(), 4, MalnVariant::Clip, order.as_mut_ptr(), 5);
        assert_eq!(st, MalnStatus::NullPointer);

        assert_eq!(maln_model_dim(f.model), 3);
        let mut out = [0.0; 3];
        assert_eq!(maln_embed(f.model, MalnModality::Photo, x.as_ptr(), 4, out.as_mut_ptr(), 3), MalnStatus::Ok);
        assert!(maln_last_error_message().is_null());
    }
}

#[test]
fn error_message_is_per_thread() {
    let f = fixture();
    let x = [1.0; 4];
    let mut small = [0.0; 1];
    unsafe {
        maln_embed(f.model, MalnModality::Photo, x.as_ptr(), 4, small.as_mut_ptr(), 1);
    }
    assert!(!maln_last_error_message().is_null());
    std::thread::spawn(|| assert!(maln_last_error_message().is_null())).join().unwrap();
}

#[test]
fn header_declares_the_surface() {
    let header = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/modalign.h")).unwrap();
    for name in [
        "MALN_STATUS_OK = 0",
        "MALN_STATUS_BUFFER_TOO_SMALL",
        "typedef struct MalnModel MalnModel",
        "maln_model_load",
        "maln_rank",
        "maln_last_error_message",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
