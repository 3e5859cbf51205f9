#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "p4d/common.hpp"

namespace p4d {

/// Token table shared by the text encoder, the projection and the prompt
/// initializers. Immutable after construction.
class Vocabulary {
  public:
    Vocabulary(std::vector<std::string> tokens, Mat embeddings,
               std::vector<bool> special);

    int size() const { return static_cast<int>(tokens_.size()); }
    int dim() const { return static_cast<int>(embeddings_.cols()); }

    const Mat& embeddings() const { return embeddings_; }
    Vec embedding(int id) const { return embeddings_.row(id).transpose(); }
    const std::string& token(int id) const { return tokens_.at(id); }
    std::optional<int> id_of(const std::string& token) const;
    bool is_special(int id) const { return special_.at(id); }

    // non-special ids, ascending; the projection target set
    const std::vector<int>& content_ids() const { return content_ids_; }

    int pad_id() const { return pad_id_; }
    int bos_id() const { return bos_id_; }
    int eos_id() const { return eos_id_; }

    // one token string per line + row-major float32 matrix (V x d)
    static Vocabulary load(const std::string& tokens_path,
                           const std::string& matrix_path);
    void save(const std::string& tokens_path,
              const std::string& matrix_path) const;

    static constexpr const char* kPad = "<pad>";
    static constexpr const char* kBos = "<bos>";
    static constexpr const char* kEos = "<eos>";

  private:
    std::vector<std::string> tokens_;
    Mat embeddings_;
    std::vector<bool> special_;
    std::vector<int> content_ids_;
    std::unordered_map<std::string, int> index_;
    int pad_id_ = -1, bos_id_ = -1, eos_id_ = -1;
};

}  // namespace p4d
