#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fasw/fas_core.hpp"
#include "fasw/training.hpp"

namespace fasw {

struct BaselineResult {
    FasModel model;
    std::optional<BinaryHead> head;  // set for head-scored methods (lwf)
    LossHistory history;
};

/// L_Orig on target data only, starting from a copy of the source model.
BaselineResult naive_finetune(const FasModel& source, const DatasetManifest& target_train, const TrainSchedule& schedule);

/// Fresh model trained on source and target together; every batch is split
/// evenly between the two manifests. Needs source data (benchmark ceiling).
BaselineResult joint_train(const ModelConfig& cfg, const DatasetManifest& source_train,
                           const DatasetManifest& target_train, const TrainSchedule& schedule);

struct LwfOptions {
    TrainSchedule train;
    double temperature = 2.0;
    double distill_weight = 1.0;
};

/// mean over rows of KL(softmax(teacher/T) || softmax(student/T)); the
/// teacher side is constant.
ad::Var distillation_kl(const ad::Var& teacher_logits, const ad::Var& student_logits, double temperature);

/// Head cross-entropy on target data plus distillation towards the frozen
/// source model + head. Backbone and head are both trained.
BaselineResult lwf_distill(const FasModel& source, const BinaryHead& source_head, const DatasetManifest& target_train,
                           const LwfOptions& opt);

/// Inputs a registered method may use. Source-free methods must ignore `source_train`.
struct MethodContext {
    const FasModel* source = nullptr;
    const BinaryHead* source_head = nullptr;
    const DatasetManifest* source_train = nullptr;
    const DatasetManifest* target_train = nullptr;
    TrainSchedule schedule;
    std::map<std::string, double> params;
};

using MethodFn = std::function<BaselineResult(const MethodContext&)>;

/// Name -> method; ships with naive_ft, joint and lwf, and accepts plugins.
class MethodRegistry {
public:
    MethodRegistry();
    void add(const std::string& name, MethodFn fn, bool source_free);
    bool has(const std::string& name) const;
    bool source_free(const std::string& name) const;
    BaselineResult run(const std::string& name, const MethodContext& ctx) const;
    std::vector<std::string> names() const;

private:
    struct Entry {
        MethodFn fn;
        bool source_free;
    };
    std::map<std::string, Entry> methods_;
};

}  // namespace fasw
