#include <numeric>

#include "patmod/error.hpp"
#include "patmod/model.hpp"
#include "patmod/ops.hpp"

namespace patmod::model {

ForwardTrace Model::forward(num::Tape& tape, const num::Tensor& image, const geom::PointCloud& ground_truth,
                            bool full_rows) const {
  num::Var f_I = encode_image(tape, image);
  return run(tape, f_I, geom::reference_box(ground_truth), full_rows);
}

ForwardTrace Model::infer(num::Tape& tape, const num::Tensor& image, bool full_rows) const {
  return infer_from_latent(tape, encode_image(tape, image), full_rows);
}

ForwardTrace Model::infer_from_latent(num::Tape& tape, num::Var f_I, bool full_rows) const {
  // The split box comes from the model's own initial prediction.
  num::Tape probe(false);
  const num::Var s = decode_shape(probe, probe.constant(f_I.value()));
  return run(tape, f_I, geom::reference_box(geom::PointCloud(s.value())), full_rows);
}

ForwardTrace Model::run(num::Tape& tape, num::Var f_I, const geom::Box& box, bool full_rows) const {
  const ModelConfig& c = config_;
  ForwardTrace trace;
  trace.full_rows = full_rows;
  trace.f_I = f_I;
  trace.S_cloud = decode_shape(tape, f_I);
  if (c.ablations.no_local) {
    trace.local = false;
    trace.F_cloud = trace.S_cloud;
    return trace;
  }

  const std::size_t capacity = c.region_capacity();
  trace.regions = geom::split_regions(geom::PointCloud(trace.S_cloud.value()), box, c.M, capacity);
  const auto& regions = trace.regions.regions;
  const std::size_t m_count = regions.size();

  // Real rows of every region, region-major.
  std::vector<std::size_t> real_rows;
  std::vector<std::size_t> real_offset(m_count + 1, 0);
  std::vector<std::size_t> region_of_real;
  for (std::size_t m = 0; m < m_count; ++m) {
    real_offset[m] = real_rows.size();
    for (std::size_t src : regions[m].source_rows) {
      real_rows.push_back(src);
      region_of_real.push_back(m);
    }
  }
  real_offset[m_count] = real_rows.size();
  if (real_rows.empty()) throw DomainError("forward: every region is empty");

  num::Var gathered = num::gather_rows(trace.S_cloud, real_rows);
  std::vector<num::Var> centers;
  for (std::size_t m = 0; m < m_count; ++m) {
    if (regions[m].empty()) {
      centers.push_back(tape.constant(num::Tensor({1, 3})));
    } else {
      centers.push_back(num::reduce_mean(num::slice_rows(gathered, real_offset[m], real_offset[m + 1]), 0));
    }
  }
  num::Var center_mat = num::concat(centers, 0);
  num::Var centered = num::sub(gathered, num::gather_rows(center_mat, region_of_real));

  // Region encoder over all real rows at once, pooled per region.
  num::Var h = num::relu(num::linear(centered, tape.parameter(params_, region_fc_.weight),
                                     tape.parameter(params_, region_fc_.bias)));
  for (std::size_t m = 0; m < m_count; ++m) {
    if (regions[m].empty()) {
      trace.f_R.push_back(tape.constant(num::Tensor({1, c.E})));
    } else {
      trace.f_R.push_back(num::max_pool_rows(num::slice_rows(h, real_offset[m], real_offset[m + 1])).values);
    }
  }

  // Rows carried through the local stage: all N*P per region, or only real ones.
  std::vector<std::size_t> live(m_count);
  std::vector<std::size_t> live_offset(m_count + 1, 0);
  std::vector<std::size_t> region_of_live;
  for (std::size_t m = 0; m < m_count; ++m) {
    live[m] = full_rows ? capacity : regions[m].real_count();
    live_offset[m + 1] = live_offset[m] + live[m];
    region_of_live.insert(region_of_live.end(), live[m], m);
  }
  const std::size_t total_live = live_offset[m_count];

  num::Var local;
  if (c.ablations.no_patterns) {
    if (full_rows) {
      // Padded rows read the appended zero row.
      num::Var padded_src = num::concat({centered, tape.constant(num::Tensor({1, 3}))}, 0);
      std::vector<std::size_t> index(total_live, real_rows.size());
      for (std::size_t m = 0; m < m_count; ++m) {
        for (std::size_t r = 0; r < regions[m].real_count(); ++r) {
          index[live_offset[m] + r] = real_offset[m] + r;
        }
      }
      local = num::gather_rows(padded_src, index);
    } else {
      local = centered;
    }
  } else {
    trace.patterns = patterns(tape);
    num::Var f_r_mat = num::concat(trace.f_R, 0);
    std::vector<num::Var> blocks;
    std::vector<std::size_t> block_pos(total_live);
    std::size_t produced = 0;
    for (std::size_t n = 0; n < c.N; ++n) {
      std::vector<std::size_t> pattern_rows;
      std::vector<std::size_t> region_rows;
      for (std::size_t m = 0; m < m_count; ++m) {
        for (std::size_t p = 0; p < c.P; ++p) {
          const std::size_t r = n * c.P + p;
          if (r >= live[m]) break;
          pattern_rows.push_back(p);
          region_rows.push_back(m);
          block_pos[live_offset[m] + r] = produced++;
        }
      }
      if (pattern_rows.empty()) continue;
      const Linear& first = modularizers_[n].layers[0];
      num::Var w = tape.parameter(params_, first.weight);
      num::Var pw = num::matmul(trace.patterns[n], num::slice_rows(w, 0, 3));
      num::Var fw = num::matmul(f_r_mat, num::slice_rows(w, 3, 3 + c.E));
      num::Var x = num::add(num::add(num::gather_rows(pw, pattern_rows), num::gather_rows(fw, region_rows)),
                            tape.parameter(params_, first.bias));
      blocks.push_back(apply(tape, modularizers_[n], num::relu(x), 1));
    }
    local = num::gather_rows(num::concat(blocks, 0), block_pos);
  }

  num::Var global = num::add(local, num::gather_rows(center_mat, region_of_live));
  num::Var t;
  num::Var u;
  if (c.ablations.no_shift) {
    t = tape.constant(num::Tensor({total_live, 3}));
    u = global;
  } else {
    std::tie(t, u) = customize(tape, global, f_I);
  }

  for (std::size_t m = 0; m < m_count; ++m) {
    const std::size_t b = live_offset[m];
    const std::size_t e = live_offset[m + 1];
    if (b == e) {
      const num::Var empty = tape.constant(num::Tensor({0, 3}));
      trace.R_prime.push_back(empty);
      trace.R_prime_global.push_back(empty);
      trace.t.push_back(empty);
      trace.U.push_back(empty);
      continue;
    }
    trace.R_prime.push_back(num::slice_rows(local, b, e));
    trace.R_prime_global.push_back(num::slice_rows(global, b, e));
    trace.t.push_back(num::slice_rows(t, b, e));
    trace.U.push_back(num::slice_rows(u, b, e));
  }

  // Removal: keep the U rows whose index held a real point.
  num::Var kept = u;
  if (full_rows) {
    std::vector<std::size_t> keep;
    for (std::size_t m = 0; m < m_count; ++m) {
      for (std::size_t r = 0; r < regions[m].real_count(); ++r) keep.push_back(live_offset[m] + r);
    }
    kept = num::gather_rows(u, keep);
  }
  if (kept.rows() > c.F) {
    kept = num::gather_rows(kept, geom::farthest_point_indices(geom::PointCloud(kept.value()), c.F));
  }
  trace.F_cloud = kept;
  return trace;
}

}  // namespace patmod::model
