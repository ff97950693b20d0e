#include "episignal/report.hpp"

#include <algorithm>
#include <map>
#include <unordered_set>

namespace episignal::report {

// English stopword list, version 1. Changing it changes cluster labels.
const std::vector<std::string>& default_stopwords() {
    static const std::vector<std::string> words{
        "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as", "at",
        "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could",
        "did", "do", "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has",
        "have", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "if",
        "in", "into", "is", "it", "its", "itself", "just", "me", "more", "most", "my", "myself", "no", "nor",
        "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out",
        "over", "own", "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
        "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
        "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who",
        "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself", "yourselves", "im", "dont",
        "its", "thats", "get", "got", "like", "also", "really", "one", "even", "still", "much", "going"};
    return words;
}

const std::vector<std::string>& default_keywords() {
    static const std::vector<std::string> words{
        "covid",   "coronavirus", "virus",    "fever",    "cough",   "symptoms", "sick",     "tested",
        "positive", "hospital",   "icu",      "cases",    "outbreak", "quarantine", "isolation", "lockdown",
        "mask",    "distancing",  "vaccine",  "testing",  "death",   "deaths",   "spread",   "infection"};
    return words;
}

namespace {
std::string lower(std::string s) {
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
    return s;
}
}  // namespace

std::vector<ClusterLabel> label_clusters(const cluster::ClusterModel& model,
                                         const std::vector<ingest::PostRecord>& posts,
                                         const std::vector<std::string>& stopwords, std::size_t top) {
    if (model.labels.size() != posts.size())
        throw DimensionError("label_clusters: " + std::to_string(model.labels.size()) + " labels for " +
                             std::to_string(posts.size()) + " posts");
    std::unordered_set<std::string> stop;
    for (const auto& w : stopwords) stop.insert(lower(w));

    std::map<int, std::pair<int, std::map<std::string, int>>> acc;
    for (std::size_t i = 0; i < posts.size(); ++i) {
        const int c = model.labels[i];
        if (c < 0) continue;
        auto& [freq, words] = acc[c];
        ++freq;
        for (const auto& t : posts[i].tokens) {
            std::string w = lower(t);
            if (w.empty() || stop.count(w)) continue;
            ++words[w];
        }
    }
    std::vector<ClusterLabel> out;
    for (auto& [id, entry] : acc) {
        std::vector<std::pair<std::string, int>> ranked(entry.second.begin(), entry.second.end());
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        ClusterLabel l;
        l.id = id;
        l.frequency = entry.first;
        for (std::size_t j = 0; j < ranked.size() && j < top; ++j) l.top_words.push_back(ranked[j].first);
        out.push_back(std::move(l));
    }
    std::sort(out.begin(), out.end(), [](const ClusterLabel& a, const ClusterLabel& b) {
        if (a.frequency != b.frequency) return a.frequency > b.frequency;
        return a.id < b.id;
    });
    return out;
}

}  // namespace episignal::report
