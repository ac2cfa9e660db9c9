import io
import re
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import networkx as nx
import requests

from utils.logger import LOGGER
from .errors import GraphFormatError
from .graph import Graph, largest_connected_component, load_edge_list

DATASETS_DIR = Path(__file__).resolve().parent.parent / "datasets"


@dataclass(frozen=True)
class PublicGraph:
    url: str
    node_count: int
    edge_count: int


PUBLIC_GRAPHS = {
    "football": PublicGraph("http://www-personal.umich.edu/~mejn/netdata/football.zip", 115, 613),
    "dolphins": PublicGraph("http://www-personal.umich.edu/~mejn/netdata/dolphins.zip", 62, 159),
}

NAMED_GRAPHS = ("karate", *PUBLIC_GRAPHS)


def _read_gml(path: Path) -> nx.Graph:
    try:
        graph = nx.read_gml(path, label="id")
    except nx.NetworkXError as e:
        # some public GML files repeat edges without declaring a multigraph
        LOGGER.warning(f"{path.name}: {e}; re-reading as a multigraph")
        text = path.read_text(encoding="utf-8")
        text = re.sub(r"graph\s*\[", "graph [\n  multigraph 1", text, count=1)
        graph = nx.parse_gml(text, label="id")
    return nx.Graph(graph)


def download_named_graph(name: str, directory: Optional[Path] = None, timeout: float = 30.0) -> Path:
    """
    Fetch ``<name>.gml`` from its public archive into ``directory`` once.

    Later calls find the file and return its path without touching the network.
    """
    source = PUBLIC_GRAPHS[name]
    directory = directory or DATASETS_DIR
    path = directory / f"{name}.gml"
    if path.exists():
        return path

    LOGGER.info(f"Downloading {name} from {source.url}")
    try:
        response = requests.get(source.url, timeout=timeout)
        response.raise_for_status()
    except requests.RequestException as e:
        raise FileNotFoundError(f"{path} not found and the download from {source.url} failed: {e}") from e

    with zipfile.ZipFile(io.BytesIO(response.content)) as archive:
        member = next((item for item in archive.namelist() if item.endswith(f"{name}.gml")), None)
        if member is None:
            raise GraphFormatError(f"{source.url} holds no {name}.gml", 1)
        content = archive.read(member)
    directory.mkdir(parents=True, exist_ok=True)
    path.write_bytes(content)
    LOGGER.info(f"Cached {name} at {path}")
    return path


def load_named_graph(name: str, directory: Optional[Path] = None, download: bool = True) -> Graph:
    """
    Load one of the small public graphs by name.

    ``karate`` ships with networkx. ``football`` and ``dolphins`` are read
    from ``<directory>/<name>.gml``, fetched on first use unless
    ``download`` is off. Node and edge counts are checked against the
    published sizes.
    """
    name = name.lower()
    if name not in NAMED_GRAPHS:
        raise ValueError(f"unknown graph {name!r}; choose from {list(NAMED_GRAPHS)}")
    if name == "karate":
        return Graph.from_networkx(nx.karate_club_graph())

    source = PUBLIC_GRAPHS[name]
    path = (directory or DATASETS_DIR) / f"{name}.gml"
    if not path.exists():
        if not download:
            raise FileNotFoundError(f"{path} not found; download the {name} GML file into {path.parent}")
        path = download_named_graph(name, directory)
    graph = nx.convert_node_labels_to_integers(_read_gml(path), ordering="sorted")
    graph.remove_edges_from(nx.selfloop_edges(graph))
    if (graph.number_of_nodes(), graph.number_of_edges()) != (source.node_count, source.edge_count):
        raise GraphFormatError(
            f"{path} has {graph.number_of_nodes()} nodes and {graph.number_of_edges()} edges, "
            f"expected {source.node_count} and {source.edge_count}",
            1,
        )
    return Graph.from_networkx(graph)


def load_graph(source: str | Path, keep_largest_component: bool = False) -> Graph:
    """An edge-list path, or the name of a bundled public graph."""
    path = Path(source)
    if not path.exists() and str(source).lower() in NAMED_GRAPHS:
        graph = load_named_graph(str(source))
        return largest_connected_component(graph) if keep_largest_component else graph
    return load_edge_list(path, keep_largest_component=keep_largest_component)
