#include "ciforge/io.hpp"

#include <bit>
#include <fstream>

#include <nlohmann/json.hpp>

namespace ciforge {

static_assert(std::endian::native == std::endian::little,
              "field dumps are little-endian; this build targets LE hosts");

void write_json_file(const std::filesystem::path& path, const std::string& serialized) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "io", "cannot open " + path.string() + " for writing");
  out << serialized << '\n';
  require(out.good(), "io", "write failed for " + path.string());
}

template <int NC>
void dump_field(const FieldT<NC>& f, const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  nlohmann::json header;
  header["name"] = name;
  header["grid_n"] = f.grid.n;
  header["components"] = NC;
  header["time_tag"] = f.time_tag;
  header["layout"] = "f64-le-component-major-k-fastest";
  write_json_file(dir / (name + ".json"), header.dump(2));

  std::ofstream raw(dir / (name + ".f64"), std::ios::binary | std::ios::trunc);
  require(raw.good(), "io", "cannot open " + (dir / (name + ".f64")).string());
  for (int c = 0; c < NC; ++c)
    raw.write(reinterpret_cast<const char*>(f.c[c].data()),
              static_cast<std::streamsize>(f.c[c].size() * sizeof(double)));
  require(raw.good(), "io", "write failed for " + (dir / (name + ".f64")).string());
}

namespace {
nlohmann::json read_header(const std::filesystem::path& dir, const std::string& name) {
  std::ifstream in(dir / (name + ".json"));
  require(in.good(), "io", "missing field header " + (dir / (name + ".json")).string());
  nlohmann::json header;
  in >> header;
  return header;
}
}  // namespace

int dumped_components(const std::filesystem::path& dir, const std::string& name) {
  return read_header(dir, name).at("components").get<int>();
}

template <int NC>
FieldT<NC> load_field(const std::filesystem::path& dir, const std::string& name) {
  auto header = read_header(dir, name);
  require(header.at("components").get<int>() == NC, "io",
          "component count mismatch loading " + name);
  FieldT<NC> f(make_grid(header.at("grid_n").get<int>()), header.at("time_tag").get<double>());
  std::ifstream raw(dir / (name + ".f64"), std::ios::binary);
  require(raw.good(), "io", "missing field data " + (dir / (name + ".f64")).string());
  for (int c = 0; c < NC; ++c) {
    raw.read(reinterpret_cast<char*>(f.c[c].data()),
             static_cast<std::streamsize>(f.c[c].size() * sizeof(double)));
    require(raw.gcount() == static_cast<std::streamsize>(f.c[c].size() * sizeof(double)), "io",
            "truncated field data in " + name + ".f64");
  }
  return f;
}

#define CIFORGE_INSTANTIATE(NC)                                                        \
  template void dump_field<NC>(const FieldT<NC>&, const std::filesystem::path&,        \
                               const std::string&);                                    \
  template FieldT<NC> load_field<NC>(const std::filesystem::path&, const std::string&);
CIFORGE_INSTANTIATE(1)
CIFORGE_INSTANTIATE(3)
CIFORGE_INSTANTIATE(6)
#undef CIFORGE_INSTANTIATE

}  // namespace ciforge
