import plotly.graph_objects as go

from functions.metrics import video_frame, wait_decomposition


WAIT_COLORS = {
    'model_wait': '#a0aec0',
    'forced_wait': '#ff6b6b',
    'parallel': '#48bb78',
    'non_parallel': '#4299e1',
}

WAIT_NAMES = {
    'model_wait': 'Wait (modèle)',
    'forced_wait': 'Wait forcé',
    'parallel': 'Parallèle',
    'non_parallel': 'Non parallèle',
}


def create_wait_figure(runs):
    """
    Barres empilées de la décomposition des décisions robot par exécution

    Args:
        runs: dict nom de l'exécution -> journaux ou échantillons

    Returns:
        go.Figure: une barre par exécution, fractions empilées
    """
    names = list(runs.keys())
    fractions = {name: wait_decomposition(items) for name, items in runs.items()}

    fig = go.Figure()
    for key, label in WAIT_NAMES.items():
        values = [fractions[name][key] for name in names]
        fig.add_trace(go.Bar(
            name=label,
            x=names,
            y=values,
            marker_color=WAIT_COLORS[key],
            text=[f"{v:.1%}" for v in values],
            textposition='auto',
        ))

    fig.update_layout(
        title={'text': 'Décomposition des décisions du robot', 'x': 0.5, 'xanchor': 'center'},
        barmode='stack',
        yaxis=dict(title='Fraction des décisions', range=[0, 1]),
        height=450,
    )
    return fig


def create_saved_steps_figure(runs):
    """Pas économisés (B_i − H_i) par vidéo, une série par exécution"""
    fig = go.Figure()
    for name, logs in runs.items():
        df = video_frame(logs)
        if df.empty:
            continue
        fig.add_trace(go.Bar(
            name=name,
            x=df['video_id'],
            y=df['s'],
            text=[f"{s} / {b}" for s, b in zip(df['s'], df['b'])],
            textposition='auto',
        ))

    fig.update_layout(
        title={'text': 'Pas économisés par vidéo', 'x': 0.5, 'xanchor': 'center'},
        barmode='group',
        yaxis_title='S_i',
        xaxis_tickangle=-45,
        height=450,
    )
    return fig


def write_figures(runs, path, include_saved_steps=True):
    """Écrit les figures dans un fichier HTML autonome"""
    figures = [create_wait_figure(runs)]
    if include_saved_steps:
        figures.append(create_saved_steps_figure(runs))

    body = "\n".join(
        fig.to_html(full_html=False, include_plotlyjs="cdn" if i == 0 else False)
        for i, fig in enumerate(figures)
    )
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"<html><head><meta charset=\"utf-8\"></head><body>\n{body}\n</body></html>\n")
    return path
