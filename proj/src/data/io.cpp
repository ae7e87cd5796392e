#include "meta4/data/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "meta4/core/kv.hpp"

namespace meta4::data {

namespace fs = std::filesystem;

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open '", path, "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write '", path, "'");
    out << text;
    require(out.good(), "short write to '", path, "'");
}

bool field_needs_quotes(const std::string& f) {
    if (!f.empty() && (f.front() == ' ' || f.back() == ' ')) return true;
    return f.find_first_of(",\"\n\r") != std::string::npos;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const std::string& where) {
    require(!s.empty(), where, ": empty numeric field");
    const char* begin = s.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    require(end == begin + s.size(), where, ": malformed number '", s, "'");
    return v;
}

}  // namespace

std::vector<std::vector<std::string>> parse_csv_text(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;  // row has at least one field begun

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        field_started = false;
    };

    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            end_row();
        } else if (c == '\r') {
            // swallow; \r\n and lone \r both end the row via the \n path or
            // the next character
            if (i + 1 >= text.size() || text[i + 1] != '\n') end_row();
        } else {
            field += c;
        }
    }
    require(!in_quotes, "csv ends inside a quoted field");
    if (field_started || !field.empty()) end_row();
    return rows;
}

std::string format_csv_text(
    const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            const std::string& f = row[i];
            if (field_needs_quotes(f)) {
                out += '"';
                for (char c : f) {
                    if (c == '"') out += '"';
                    out += c;
                }
                out += '"';
            } else {
                out += f;
            }
        }
        out += '\n';
    }
    return out;
}

std::vector<std::vector<std::string>> load_csv(const std::string& path) {
    try {
        return parse_csv_text(read_text_file(path));
    } catch (const Error& e) {
        raise(path, ": ", e.what());
    }
}

void save_csv(const std::string& path,
              const std::vector<std::vector<std::string>>& rows) {
    write_text_file(path, format_csv_text(rows));
}

void save_pose_csv(const std::string& path, const PoseSequence& poses) {
    poses.validate();
    const Skeleton& sk = skeleton();
    std::vector<std::vector<std::string>> rows;
    rows.reserve(kPoseFrames + 1);
    std::vector<std::string> header;
    for (const auto& name : sk.joint_names) {
        header.push_back(name + "_x");
        header.push_back(name + "_y");
    }
    rows.push_back(std::move(header));
    for (size_t t = 0; t < kPoseFrames; ++t) {
        std::vector<std::string> row;
        row.reserve(kPoseWidth);
        for (size_t c = 0; c < kPoseWidth; ++c) {
            row.push_back(format_double(poses.values[t * kPoseWidth + c]));
        }
        rows.push_back(std::move(row));
    }
    save_csv(path, rows);
}

PoseSequence load_pose_csv(const std::string& path) {
    auto rows = load_csv(path);
    require(!rows.empty(), path, ": empty pose file");
    const Skeleton& sk = skeleton();
    require(rows[0].size() == kPoseWidth, path, ": expected ", kPoseWidth,
            " header columns, found ", rows[0].size());
    for (size_t j = 0; j < kNumJoints; ++j) {
        require(rows[0][j * 2] == sk.joint_names[j] + "_x" &&
                    rows[0][j * 2 + 1] == sk.joint_names[j] + "_y",
                path, ": unexpected header column for joint '",
                sk.joint_names[j], "'");
    }
    require(rows.size() == kPoseFrames + 1, path, ": expected ", kPoseFrames,
            " frame rows, found ", rows.size() - 1);
    PoseSequence poses;
    for (size_t t = 0; t < kPoseFrames; ++t) {
        const auto& row = rows[t + 1];
        require(row.size() == kPoseWidth, path, ": row ", t + 2, " has ",
                row.size(), " fields, expected ", kPoseWidth);
        for (size_t c = 0; c < kPoseWidth; ++c) {
            poses.values[t * kPoseWidth + c] =
                parse_double(row[c], path + ": row " + std::to_string(t + 2));
        }
    }
    poses.validate();
    return poses;
}

void save_schema_corpus(const std::string& path,
                        const std::vector<TextSample>& corpus) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(corpus.size() + 1);
    rows.push_back({"text", "label"});
    for (const auto& s : corpus) {
        rows.push_back({s.text, schema_label_name(s.label)});
    }
    save_csv(path, rows);
}

std::vector<TextSample> load_schema_corpus(const std::string& path) {
    auto rows = load_csv(path);
    require(!rows.empty(), path, ": empty corpus file");
    require(rows[0].size() == 2 && rows[0][0] == "text" &&
                rows[0][1] == "label",
            path, ": expected header 'text,label'");
    std::vector<TextSample> corpus;
    corpus.reserve(rows.size() - 1);
    for (size_t i = 1; i < rows.size(); ++i) {
        require(rows[i].size() == 2, path, ": row ", i + 1, " has ",
                rows[i].size(), " fields, expected 2");
        TextSample s;
        s.text = rows[i][0];
        try {
            s.label = parse_schema_label(rows[i][1]);
        } catch (const Error& e) {
            raise(path, ": row ", i + 1, ": ", e.what());
        }
        corpus.push_back(std::move(s));
    }
    return corpus;
}

std::string sample_dir_name(size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05zu", index);
    return buf;
}

void save_gesture_dataset(const std::string& dir,
                          const std::vector<GestureSample>& samples) {
    require(!samples.empty(), "refusing to save an empty dataset");
    fs::create_directories(dir);

    KvPairs manifest;
    manifest.emplace_back("count", std::to_string(samples.size()));
    manifest.emplace_back("sample_rate", std::to_string(audio::kSampleRate));
    manifest.emplace_back("pose_frames", std::to_string(kPoseFrames));
    std::string labels;
    for (const auto& name : schema_label_names()) {
        if (!labels.empty()) labels += ',';
        labels += name;
    }
    manifest.emplace_back("labels", labels);
    save_kv_file(dir + "/manifest.txt", manifest);

    for (size_t i = 0; i < samples.size(); ++i) {
        const GestureSample& s = samples[i];
        std::string sdir = dir + "/" + sample_dir_name(i);
        fs::create_directories(sdir);
        audio::save_wav(sdir + "/audio.wav", s.audio);
        write_text_file(sdir + "/transcript.txt", s.transcript + "\n");
        save_pose_csv(sdir + "/poses.csv", s.poses);
        KvPairs meta;
        meta.emplace_back("speaker_id", s.speaker_id);
        meta.emplace_back("schema", schema_label_name(s.label));
        save_kv_file(sdir + "/meta.txt", meta);
    }
}

std::vector<GestureSample> load_gesture_dataset(const std::string& dir) {
    KvPairs manifest = load_kv_file(dir + "/manifest.txt");
    size_t count = static_cast<size_t>(
        std::strtoull(kv_get(manifest, "count").c_str(), nullptr, 10));
    require(count > 0, dir, "/manifest.txt: count must be positive");

    std::vector<GestureSample> samples;
    samples.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        std::string sdir = dir + "/" + sample_dir_name(i);
        GestureSample s;
        s.audio = audio::load_wav(sdir + "/audio.wav");
        std::string transcript = read_text_file(sdir + "/transcript.txt");
        while (!transcript.empty() &&
               (transcript.back() == '\n' || transcript.back() == '\r')) {
            transcript.pop_back();
        }
        s.transcript = transcript;
        s.poses = load_pose_csv(sdir + "/poses.csv");
        KvPairs meta = load_kv_file(sdir + "/meta.txt");
        s.speaker_id = kv_get(meta, "speaker_id");
        try {
            s.label = parse_schema_label(kv_get(meta, "schema"));
        } catch (const Error& e) {
            raise(sdir, "/meta.txt: ", e.what());
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace meta4::data
