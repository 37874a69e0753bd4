#pragma once

#include "catcorr/bench.hpp"
#include "catcorr/correspond.hpp"
#include "catcorr/eval.hpp"
#include "catcorr/train.hpp"

#include <iosfwd>

namespace catcorr {

enum ExitCode : int {
    kExitOk = 0,
    kExitInput = 2,
    kExitState = 3,
    kExitPending = 4,
};

/// Entry point shared by the `catcorr` binary and the tests.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// One training sample per view, with the amodal mask and its distance transform.
std::vector<TrainSample> load_train_samples(const Dataset& ds);

/// Joins predictions with dataset ground truth and scores them. Missing or
/// failed predictions count as misses; every pair is scored.
EvalReport evaluate_predictions(const Dataset& ds, const std::vector<PairResult>& predictions,
                                double threshold_ratio);

} // namespace catcorr
