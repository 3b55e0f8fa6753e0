"""
実行履歴・証明書バンドルの閲覧UI（Streamlit）。

`streamlit run streamlit_app/streamlit_app.py` ではこのディレクトリ直下から import するが、
テスト等で `streamlit_app.django_bootstrap` として import できるようにパッケージにしておく。
"""
